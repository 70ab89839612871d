#pragma once

// Independent reference implementations used by the unit tests and by the
// acceptance suite.  Nothing here calls the code it checks.

#include <algorithm>
#include <array>
#include <functional>
#include <set>
#include <tuple>
#include <utility>
#include <vector>

#include "nert/trees.hpp"

namespace nert::oracle {

// Independent generator: every subset of unordered vertex pairs as internal
// lines, every choice of root vertex per component as the orientation, every
// shoot placement; keep acyclic results with fan-in <= max_in.
inline std::vector<DirectedTree> brute_force(int n, int shoots, int max_in) {
  std::vector<std::pair<int, int>> pairs;
  for (int a = 1; a <= n; ++a)
    for (int b = a + 1; b <= n; ++b) pairs.push_back({a, b});
  std::set<std::vector<std::tuple<int, int, int, int>>> seen;
  std::vector<DirectedTree> out;
  for (unsigned mask = 0; mask < (1u << pairs.size()); ++mask) {
    std::vector<std::pair<int, int>> edges;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (mask & (1u << i)) edges.push_back(pairs[i]);
    if (static_cast<int>(edges.size()) > n - 1) continue;
    // Components by flood fill.
    std::vector<int> comp(n + 1, 0);
    int nc = 0;
    bool cyclic = false;
    for (int v = 1; v <= n; ++v) {
      if (comp[v]) continue;
      ++nc;
      std::vector<int> stack{v};
      comp[v] = nc;
      while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (auto [a, b] : edges) {
          int w = a == u ? b : (b == u ? a : 0);
          if (w && !comp[w]) {
            comp[w] = nc;
            stack.push_back(w);
          }
        }
      }
    }
    if (static_cast<int>(edges.size()) != n - nc) cyclic = true;
    if (cyclic) continue;
    std::vector<std::vector<int>> members(nc + 1);
    for (int v = 1; v <= n; ++v) members[comp[v]].push_back(v);
    std::vector<int> choice(nc + 1, 0);
    std::function<void(int)> pick = [&](int c) {
      if (c > nc) {
        // Orient edges away from each chosen root by BFS.
        std::vector<int> parent(n + 1, -1);
        for (int k = 1; k <= nc; ++k) {
          int r = members[k][choice[k]];
          parent[r] = 0;
          std::vector<int> q{r};
          while (!q.empty()) {
            int u = q.back();
            q.pop_back();
            for (auto [a, b] : edges) {
              int w = a == u ? b : (b == u ? a : 0);
              if (w && parent[w] == -1) {
                parent[w] = u;
                q.push_back(w);
              }
            }
          }
        }
        std::vector<int> shoot_at(shoots, 1);
        std::function<void(int)> place = [&](int j) {
          if (j == shoots) {
            std::vector<Line> lines;
            for (int v = 1; v <= n; ++v)
              lines.push_back(parent[v] == 0 ? Line{0, LineKind::Root, 0, v, 0}
                                             : Line{0, LineKind::Internal, parent[v], v, 0});
            for (int s = 0; s < shoots; ++s) lines.push_back({0, LineKind::Shoot, shoot_at[s], 0, s + 1});
            std::vector<int> vs;
            for (int v = 1; v <= n; ++v) vs.push_back(v);
            DirectedTree t(vs, lines);
            t.renumber();
            for (int v = 1; v <= n; ++v)
              if (t.fan_in(v) > max_in) return;
            out.push_back(t);
            return;
          }
          for (int v = 1; v <= n; ++v) {
            shoot_at[j] = v;
            place(j + 1);
          }
        };
        place(0);
        return;
      }
      for (std::size_t i = 0; i < members[c].size(); ++i) {
        choice[c] = static_cast<int>(i);
        pick(c + 1);
      }
    };
    pick(1);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Nonempty vertex subsets of t with no ancestor relation between members, in
// increasing bitmask order.
inline std::vector<std::vector<int>> antichains(const DirectedTree& t) {
  const int n = t.vertex_count();
  std::vector<std::vector<int>> out;
  for (unsigned m = 1; m < (1u << n); ++m) {
    std::vector<int> a;
    for (int i = 0; i < n; ++i)
      if (m & (1u << i)) a.push_back(i + 1);
    bool ok = true;
    for (int x : a)
      for (int y : a)
        for (int u = t.parent(x); u != 0; u = t.parent(u))
          if (u == y) ok = false;
    if (ok) out.push_back(a);
  }
  return out;
}

// Diagonal two-point function of the doubled Gaussian state, entered by hand
// in species order (a+^dag, a+, a-, a-^dag): value (c0 + c1 n) / weight.
// The plus-branch pair is the transposed thermal correlator, so that
// <a+ a+^dag> - <a+^dag a+> = 1 as the branch commutator requires.
inline std::pair<double, double> two_point_entry(int x, int y) {
  static const std::array<std::array<std::pair<double, double>, 4>, 4> table{{
      {{{0, 0}, {0, 1}, {0, 0}, {1, 1}}},
      {{{1, 1}, {0, 0}, {0, 1}, {0, 0}}},
      {{{0, 0}, {0, 1}, {0, 0}, {1, 1}}},
      {{{1, 1}, {0, 0}, {0, 1}, {0, 0}}},
  }};
  return table.at(x).at(y);
}

}  // namespace nert::oracle
