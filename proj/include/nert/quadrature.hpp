#pragma once

// Quadrature helpers shared by the oracle and the renormalization layer.

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "nert/modespace.hpp"

namespace nert {

struct QuadratureError : Error {
  QuadratureError(const std::string& what, double estimate) : Error(what + " (error estimate " + std::to_string(estimate) + ")"), estimate(estimate) {}
  double estimate;
};

struct Rule {
  std::vector<double> nodes;    // on [0, 1]
  std::vector<double> weights;  // sum to 1
};

// 20-point Gauss-Legendre rule mapped to [0, 1].
inline const Rule& gauss_rule() {
  static const Rule rule = [] {
    using G = boost::math::quadrature::gauss<double, 20>;
    Rule r;
    const auto& x = G::abscissa();
    const auto& w = G::weights();
    for (std::size_t i = 0; i < x.size(); ++i) {
      r.nodes.push_back(0.5 * (1.0 + x[i]));
      r.weights.push_back(0.5 * w[i]);
      if (x[i] != 0.0) {
        r.nodes.push_back(0.5 * (1.0 - x[i]));
        r.weights.push_back(0.5 * w[i]);
      }
    }
    return r;
  }();
  return rule;
}

// Composite Gauss-Legendre on [a, b] with `panels` equal panels.
template <class F>
auto composite(F&& f, double a, double b, int panels) -> decltype(f(a)) {
  using R = decltype(f(a));
  const Rule& rule = gauss_rule();
  R sum{};
  bool first = true;
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * h;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      R v = f(lo + h * rule.nodes[i]);
      if (first) {
        sum = v * (h * rule.weights[i]);
        first = false;
      } else {
        sum += v * (h * rule.weights[i]);
      }
    }
  }
  return sum;
}

struct Integral {
  cplx value;
  double error;
};

// Adaptive Gauss-Kronrod on a finite interval.
template <class F>
Integral integrate(F&& f, double a, double b, double tol = 1e-11, int depth = 18) {
  if (a == b) return {0.0, 0.0};
  double err = 0.0;
  cplx v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      [&](double x) { return cplx(f(x)); }, a, b, depth, tol, &err);
  return {v, err};
}

}  // namespace nert
