#pragma once

// Minimal worker pool for independent evaluations.  Results land in input
// order, so output does not depend on the worker count.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "nert/modespace.hpp"

namespace nert {

// NERT_WORKERS, else 1.
inline int worker_count() {
  const char* e = std::getenv("NERT_WORKERS");
  if (!e || !*e) return 1;
  int n = 0;
  try {
    n = std::stoi(e);
  } catch (const std::exception&) {
    throw Error(std::string("NERT_WORKERS is not an integer: ") + e);
  }
  if (n < 1) throw Error("NERT_WORKERS must be positive");
  return n;
}

template <class R>
std::vector<R> parallel_map(std::size_t n, const std::function<R(std::size_t)>& f, int workers = worker_count()) {
  std::vector<R> out(n);
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex m;
  auto run = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        out[i] = f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(m);
        if (!err) err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < std::min<int>(workers, static_cast<int>(n)); ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
  return out;
}

}  // namespace nert
