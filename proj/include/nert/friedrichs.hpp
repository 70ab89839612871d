#pragma once

// Friedrichs diagrams: the Wick contraction patterns of a von Neumann tree
// whose vertices are quartic interaction vertices.  Every vertex has four
// slots, 0 and 1 carrying the creators (p1, p2), 2 and 3 the annihilators
// (q1, q2).  A line joins a slot of a later (upper) vertex to a slot of one of
// its descendants, or runs from a slot to the observation point.

#include <json.hpp>

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nert/gausscalc.hpp"
#include "nert/poly.hpp"
#include "nert/trees.hpp"

namespace nert {

struct SlotRef {
  int vertex = 0;  // 0 marks the observation point
  int slot = -1;
  auto key() const { return std::pair(vertex, slot); }
  friend bool operator==(const SlotRef&, const SlotRef&) = default;
  friend bool operator<(const SlotRef& a, const SlotRef& b) { return a.key() < b.key(); }
};

struct FLine {
  SlotRef upper;
  SlotRef lower;
  std::vector<int> path;  // tree line ids between the ends, original numbering
  bool external() const { return upper.vertex == 0; }
  friend bool operator==(const FLine&, const FLine&) = default;
  friend bool operator<(const FLine& a, const FLine& b) {
    return std::tie(a.upper, a.lower) < std::tie(b.upper, b.lower);
  }
};

struct DiagramOptions {
  bool thermal = true;  // occupation-proportional pairings count as nonzero
};

class FriedrichsDiagram {
 public:
  FriedrichsDiagram() = default;
  FriedrichsDiagram(DirectedTree tree, std::vector<Branch> branches, std::vector<FLine> lines)
      : tree_(std::move(tree)), original_(tree_), branch_(std::move(branches)), lines_(std::move(lines)) {
    if (static_cast<int>(branch_.size()) != tree_.vertex_count())
      throw Error("FriedrichsDiagram: one branch per vertex required");
    for (int v = 1; v <= tree_.vertex_count(); ++v) vmap_.push_back(v);
    std::sort(lines_.begin(), lines_.end());
    check();
  }

  const DirectedTree& tree() const { return tree_; }
  const DirectedTree& original_tree() const { return original_; }
  const std::vector<Branch>& branches() const { return branch_; }
  const std::vector<FLine>& lines() const { return lines_; }
  const std::map<int, double>& fixed() const { return fixed_; }
  int vertex_image(int v) const { return vmap_.at(v - 1); }
  int multiplicity = 1;

  Generator generator(const SlotRef& s, int mode = 0) const {
    return {branch_.at(s.vertex - 1), s.slot < 2, mode};
  }
  // Orientation of a line: sigma of the generator at its lower end.
  int orientation(const FLine& l) const { return generator(l.lower).sigma(); }

  std::vector<const FLine*> external_lines() const {
    std::vector<const FLine*> e;
    for (const auto& l : lines_)
      if (l.external()) e.push_back(&l);
    return e;
  }

  // Tree line ids still free (not contracted), in increasing order.
  std::vector<int> free_taus() const {
    std::vector<int> ids;
    for (const auto& l : tree_.lines()) ids.push_back(l.id);
    std::sort(ids.begin(), ids.end());
    return ids;
  }
  std::vector<int> all_taus() const {
    std::vector<int> ids;
    for (const auto& l : original_.lines()) ids.push_back(l.id);
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  // A line whose ends fall into one merged vertex belongs to its kernel.
  bool loop(const FLine& l) const {
    return !l.external() && vertex_image(l.upper.vertex) == vertex_image(l.lower.vertex);
  }

  friend bool operator==(const FriedrichsDiagram& a, const FriedrichsDiagram& b) {
    return a.original_ == b.original_ && a.branch_ == b.branch_ && a.lines_ == b.lines_ && a.tree_ == b.tree_ &&
           a.fixed_ == b.fixed_;
  }

  nlohmann::json content() const;
  std::string id() const;

  friend FriedrichsDiagram quotient_diagram(const FriedrichsDiagram& g, const std::set<int>& a,
                                            const std::map<int, double>& tau);

 private:
  void check() const {
    std::set<SlotRef> seen;
    for (const auto& l : lines_) {
      if (l.lower.vertex < 1 || l.lower.vertex > tree_.vertex_count()) throw Error("FriedrichsDiagram: bad lower end");
      if (!seen.insert(l.lower).second) throw Error("FriedrichsDiagram: slot used twice");
      if (!l.external() && !seen.insert(l.upper).second) throw Error("FriedrichsDiagram: slot used twice");
    }
  }

  DirectedTree tree_, original_;
  std::vector<Branch> branch_;
  std::vector<FLine> lines_;
  std::vector<int> vmap_;
  std::map<int, double> fixed_;
};

// Tree line ids from `lower` up to `upper` (0: through the root line).
inline std::vector<int> tree_path(const DirectedTree& t, int lower, int upper) {
  std::vector<int> p;
  int v = lower;
  while (v != upper) {
    auto l = t.up_line(v);
    if (!l) throw Error("tree_path: upper end is not an ancestor");
    p.push_back(l->id);
    if (l->kind == LineKind::Root) {
      if (upper != 0) throw Error("tree_path: upper end is not an ancestor");
      break;
    }
    v = l->upper;
  }
  return p;
}

inline const char* branch_name(Branch b) { return b == Branch::Minus ? "-" : "+"; }

inline nlohmann::json FriedrichsDiagram::content() const {
  auto end = [](const SlotRef& s) -> nlohmann::json {
    if (s.vertex == 0) return "+";
    return {s.vertex, s.slot};
  };
  nlohmann::json ls = nlohmann::json::array();
  for (const auto& l : lines_)
    ls.push_back({{"upper", end(l.upper)},
                  {"lower", end(l.lower)},
                  {"orientation", orientation(l)},
                  {"path", l.path},
                  {"loop", loop(l)}});
  nlohmann::json br = nlohmann::json::array();
  for (auto b : branch_) br.push_back(branch_name(b));
  nlohmann::json fx = nlohmann::json::array();
  for (const auto& [k, v] : fixed_) fx.push_back({k, v});
  return {{"tree", to_json(original_)}, {"quotient", to_json(tree_)}, {"branches", br}, {"lines", ls}, {"fixed", fx}};
}

inline std::string FriedrichsDiagram::id() const {
  std::string s = content().dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream o;
  o << std::hex << h;
  return o.str();
}

inline nlohmann::json to_json(const FriedrichsDiagram& g) {
  nlohmann::json j = g.content();
  j["id"] = g.id();
  j["multiplicity"] = g.multiplicity;
  return j;
}

// ---------------------------------------------------------------------------

namespace detail {

// Slot permutations p1 <-> p2 and q1 <-> q2 at every vertex; returns the
// image with the smallest line list.
inline std::vector<FLine> canonical_lines(const std::vector<FLine>& lines, int n) {
  std::vector<FLine> best;
  bool first = true;
  for (unsigned mask = 0; mask < (1u << (2 * n)); ++mask) {
    auto perm = [&](SlotRef s) {
      if (s.vertex == 0) return s;
      unsigned bits = (mask >> (2 * (s.vertex - 1))) & 3u;
      if (s.slot < 2 && (bits & 1u)) s.slot ^= 1;
      if (s.slot >= 2 && (bits & 2u)) s.slot = 5 - s.slot;
      return s;
    };
    std::vector<FLine> img = lines;
    for (auto& l : img) {
      l.upper = perm(l.upper);
      l.lower = perm(l.lower);
    }
    std::sort(img.begin(), img.end());
    auto keys = [](const std::vector<FLine>& v) {
      std::vector<std::pair<SlotRef, SlotRef>> k;
      for (const auto& l : v) k.emplace_back(l.upper, l.lower);
      return k;
    };
    if (first || keys(img) < keys(best)) {
      best = std::move(img);
      first = false;
    }
  }
  return best;
}

struct PartialDiagram {
  std::vector<FLine> lines;
  std::vector<SlotRef> open;
};

}  // namespace detail

// All Friedrichs diagrams of a shootless right tree with vertices 1..n, one
// per orbit under the slot symmetries, with multiplicity the orbit size.
inline std::vector<FriedrichsDiagram> enumerate_diagrams(const DirectedTree& t, DiagramOptions opt = {}) {
  if (!t.right() || t.shoot_count() != 0) throw Error("enumerate_diagrams: need a shootless right tree");
  const int n = t.vertex_count();
  for (int i = 0; i < n; ++i)
    if (t.vertices()[i] != i + 1) throw Error("enumerate_diagrams: vertex labels must be 1..n");
  std::map<std::pair<std::vector<Branch>, std::vector<std::pair<SlotRef, SlotRef>>>, FriedrichsDiagram> found;
  std::vector<Branch> br(n);
  auto pairs_ok = [&](const Generator& x, const Generator& y) {
    PairingCoefficient c = pairing(x, y);
    return opt.thermal ? !c.zero() : c.constant != 0.0;
  };
  std::function<std::vector<detail::PartialDiagram>(int)> rec = [&](int v) {
    std::vector<detail::PartialDiagram> acc{{}};
    std::vector<int> kids = t.children(v);
    std::vector<std::vector<int>> owner;  // child index of each open end
    std::vector<std::vector<detail::PartialDiagram>> sub;
    for (int c : kids) sub.push_back(rec(c));
    // Cartesian product of children states, remembering which child owns
    // each open end.
    std::vector<std::pair<detail::PartialDiagram, std::vector<int>>> combos{{{}, {}}};
    for (std::size_t k = 0; k < kids.size(); ++k) {
      std::vector<std::pair<detail::PartialDiagram, std::vector<int>>> next;
      for (const auto& [pd, own] : combos)
        for (const auto& s : sub[k]) {
          detail::PartialDiagram m = pd;
          std::vector<int> o = own;
          m.lines.insert(m.lines.end(), s.lines.begin(), s.lines.end());
          for (const auto& e : s.open) {
            m.open.push_back(e);
            o.push_back(static_cast<int>(k));
          }
          next.emplace_back(std::move(m), std::move(o));
        }
      combos = std::move(next);
    }
    std::vector<detail::PartialDiagram> out;
    for (const auto& [pd, own] : combos) {
      std::vector<int> match(4, -1);
      std::vector<char> used(pd.open.size(), 0);
      std::function<void(int)> slot = [&](int s) {
        if (s == 4) {
          std::vector<char> hit(kids.size(), 0);
          for (int q = 0; q < 4; ++q)
            if (match[q] >= 0) hit[own[match[q]]] = 1;
          for (char h : hit)
            if (!h) return;
          detail::PartialDiagram r;
          r.lines = pd.lines;
          for (int q = 0; q < 4; ++q) {
            if (match[q] < 0) {
              r.open.push_back({v, q});
              continue;
            }
            const SlotRef& low = pd.open[match[q]];
            r.lines.push_back({{v, q}, low, tree_path(t, low.vertex, v)});
          }
          for (std::size_t e = 0; e < pd.open.size(); ++e)
            if (!used[e]) r.open.push_back(pd.open[e]);
          out.push_back(std::move(r));
          return;
        }
        slot(s + 1);
        Generator x{br[v - 1], s < 2, 0};
        for (std::size_t e = 0; e < pd.open.size(); ++e) {
          if (used[e]) continue;
          Generator y{br[pd.open[e].vertex - 1], pd.open[e].slot < 2, 0};
          if (!pairs_ok(x, y)) continue;
          used[e] = 1;
          match[s] = static_cast<int>(e);
          slot(s + 1);
          match[s] = -1;
          used[e] = 0;
        }
      };
      slot(0);
    }
    (void)owner;
    return out;
  };
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    for (int v = 0; v < n; ++v) br[v] = (mask & (1u << v)) ? Branch::Plus : Branch::Minus;
    std::vector<detail::PartialDiagram> roots{{}};
    for (const auto& comp : t.components()) {
      int r = t.top(comp[0]);
      std::vector<detail::PartialDiagram> next;
      for (const auto& a : roots)
        for (const auto& b : rec(r)) {
          detail::PartialDiagram m = a;
          m.lines.insert(m.lines.end(), b.lines.begin(), b.lines.end());
          for (const auto& e : b.open) m.lines.push_back({{0, -1}, e, tree_path(t, e.vertex, 0)});
          next.push_back(std::move(m));
        }
      roots = std::move(next);
    }
    for (auto& pd : roots) {
      auto canon = detail::canonical_lines(pd.lines, n);
      std::vector<std::pair<SlotRef, SlotRef>> key;
      for (const auto& l : canon) key.emplace_back(l.upper, l.lower);
      auto k = std::pair(br, key);
      auto it = found.find(k);
      if (it == found.end())
        found.emplace(k, FriedrichsDiagram(t, br, canon));
      else
        ++it->second.multiplicity;
    }
  }
  std::vector<FriedrichsDiagram> out;
  for (auto& [k, g] : found) out.push_back(std::move(g));
  return out;
}

// Branch flip of every vertex: the diagram of the starred tree.
inline FriedrichsDiagram star_diagram(const FriedrichsDiagram& g) {
  std::vector<Branch> b;
  for (auto x : g.branches()) b.push_back(x == Branch::Minus ? Branch::Plus : Branch::Minus);
  FriedrichsDiagram s(g.original_tree(), b, g.lines());
  s.multiplicity = g.multiplicity;
  return s;
}

// Contracts the internal tree lines in A at fixed delays; the contracted
// delays become constant offsets of the lines that cross them.
inline FriedrichsDiagram quotient_diagram(const FriedrichsDiagram& g, const std::set<int>& a,
                                          const std::map<int, double>& tau) {
  FriedrichsDiagram q = g;
  DirectedTree nt = quotient_tree(g.tree_, a);
  // Vertex images: follow each current vertex to its merged label.
  std::map<int, int> img;
  {
    std::map<int, int> rep;
    for (int v : g.tree_.vertices()) rep[v] = v;
    std::function<int(int)> find = [&](int v) { return rep[v] == v ? v : rep[v] = find(rep[v]); };
    for (int id : a) {
      const Line& l = g.tree_.line(id);
      int x = find(l.upper), y = find(l.lower);
      if (x != y) rep[std::max(x, y)] = std::min(x, y);
    }
    std::set<int> reps;
    for (int v : g.tree_.vertices()) reps.insert(find(v));
    int next = 1;
    std::map<int, int> compress;
    for (int r : reps) compress[r] = next++;
    for (int v : g.tree_.vertices()) img[v] = compress[find(v)];
  }
  for (auto& v : q.vmap_) v = img.at(v);
  for (int id : a) {
    auto it = tau.find(id);
    if (it == tau.end()) throw Error("quotient_diagram: missing delay for contracted line " + std::to_string(id));
    q.fixed_[id] = it->second;
  }
  q.tree_ = nt;
  return q;
}

// ---------------------------------------------------------------------------
// Evaluation on a mode grid: U^0 of the diagram at delays tau (by original
// tree line id) as a normal polynomial.

inline NormalPolynomial grid_value(const FriedrichsDiagram& g, const WickContext& w, const InteractionKernel& kernel,
                                   const std::map<int, double>& tau) {
  const ModeGrid& grid = w.grid();
  const int m = static_cast<int>(grid.size());
  const int n = g.original_tree().vertex_count();
  const auto& lines = g.lines();
  const int nl = static_cast<int>(lines.size());
  auto delay = [&](int id) {
    auto f = g.fixed().find(id);
    if (f != g.fixed().end()) return f->second;
    auto it = tau.find(id);
    if (it == tau.end()) throw Error("grid_value: missing delay for line " + std::to_string(id));
    return it->second;
  };
  std::vector<double> span(nl, 0.0);
  for (int r = 0; r < nl; ++r)
    for (int id : lines[r].path) span[r] += delay(id);
  // slot -> line index
  std::vector<std::array<int, 4>> at(n);
  for (int r = 0; r < nl; ++r) {
    at[lines[r].lower.vertex - 1][lines[r].lower.slot] = r;
    if (!lines[r].external()) at[lines[r].upper.vertex - 1][lines[r].upper.slot] = r;
  }
  // vertex completion: the last line index among its slots
  std::vector<std::vector<int>> ready(nl);
  for (int v = 0; v < n; ++v) ready[*std::max_element(at[v].begin(), at[v].end())].push_back(v);
  NormalPolynomial out;
  std::vector<int> mode(nl, 0);
  std::function<void(int, cplx)> rec = [&](int r, cplx c) {
    if (r == nl) {
      Monomial mono;
      for (int k = 0; k < nl; ++k)
        if (lines[k].external()) mono.push_back(g.generator(lines[k].lower, mode[k]));
      out.add(sorted(std::move(mono)), c);
      return;
    }
    for (int k = 0; k < m; ++k) {
      mode[r] = k;
      cplx cc = c;
      const FLine& l = lines[r];
      if (!l.external()) {
        cc *= w.contract(g.generator(l.upper, k), g.generator(l.lower, k));
        if (cc == cplx(0.0)) continue;
      }
      cc *= std::exp(I * (g.orientation(l) * grid.energy(k) * span[r]));
      bool ok = true;
      for (int v : ready[r]) {
        const auto& s = at[v];
        int p1 = mode[s[0]], p2 = mode[s[1]], q1 = mode[s[2]], q2 = mode[s[3]];
        if (!grid.balanced(p1, p2, q1, q2)) {
          ok = false;
          break;
        }
        const double w3 = grid.weight(p1) * grid.weight(p2) * grid.weight(q1);
        cplx kv = kernel(grid.momentum(p1), grid.momentum(p2), grid.momentum(q1), grid.momentum(q2));
        cc *= g.branches()[v] == Branch::Minus ? -I * w3 * kv : I * w3 * std::conj(kv);
      }
      if (ok) rec(r + 1, cc);
    }
  };
  rec(0, double(g.multiplicity));
  return out;
}

// ---------------------------------------------------------------------------
// Continuum integrand in d dimensions, one momentum per line, paired with the
// test function exp(-kappa sum_ext p^2) on the external lines.  The delays
// are all original tree lines in increasing id order; the propagator
// constant + n0 exp(-b p^2) is expanded into separate Gaussian terms.
// With `clock` one more delay is appended that multiplies the test function
// by exp(i t sum_ext Or (p^2/2 - mu)), the free evolution of the test slot.

struct ContinuumSetup {
  int dimension = 1;
  InteractionKernel kernel{};
  double mu = -1.0;
  GaussianForm occupation{0.0, 1.0};
  double test_width = 1.0;
};

inline GaussianIntegrand integrand(const FriedrichsDiagram& g, const ContinuumSetup& cs, bool clock = false) {
  const auto& lines = g.lines();
  const int nl = static_cast<int>(lines.size());
  auto taus = g.all_taus();
  std::map<int, int> tau_index;
  for (std::size_t i = 0; i < taus.size(); ++i) tau_index[taus[i]] = static_cast<int>(i);
  std::vector<Variable> vars;
  for (int r = 0; r < nl; ++r) {
    std::ostringstream nm;
    nm << "p[" << lines[r].lower.vertex << "." << lines[r].lower.slot << "]";
    vars.push_back({nm.str(), lines[r].external()});
  }
  const int ntau = static_cast<int>(taus.size()) + (clock ? 1 : 0);
  GaussianIntegrand f(cs.dimension, vars, ntau);
  const int n = g.original_tree().vertex_count();
  for (int v = 1; v <= n; ++v) {
    VecR row = VecR::Zero(nl);
    for (int r = 0; r < nl; ++r) {
      for (const SlotRef& s : {lines[r].upper, lines[r].lower})
        if (s.vertex == v) row[r] += s.slot < 2 ? 1.0 : -1.0;
    }
    f.add_constraint(row);
  }
  GaussTerm base = f.blank(double(g.multiplicity));
  for (int v = 1; v <= n; ++v)
    base.coef *= g.branches()[v - 1] == Branch::Minus ? -I * cs.kernel.amplitude : I * std::conj(cs.kernel.amplitude);
  std::vector<int> internal;
  for (int r = 0; r < nl; ++r) {
    const FLine& l = lines[r];
    base.a0(r, r) += cs.kernel.width * (l.external() ? 1.0 : 2.0);
    if (l.external()) base.a0(r, r) += cs.test_width;
    const int o = g.orientation(l);
    for (int id : l.path) {
      int k = tau_index.at(id);
      base.b[k](r, r) += 0.5 * o;
      base.nu[k] -= cs.mu * o;
    }
    if (clock && l.external()) {
      base.b[ntau - 1](r, r) += 0.5 * o;
      base.nu[ntau - 1] -= cs.mu * o;
    }
    if (!l.external()) internal.push_back(r);
  }
  for (unsigned mask = 0; mask < (1u << internal.size()); ++mask) {
    GaussTerm t = base;
    bool zero = false;
    for (std::size_t i = 0; i < internal.size(); ++i) {
      const FLine& l = lines[internal[i]];
      PairingCoefficient pc = pairing(g.generator(l.upper), g.generator(l.lower));
      if (mask & (1u << i)) {
        t.coef *= pc.occupation * cs.occupation.n0;
        t.a0(internal[i], internal[i]) += cs.occupation.b;
      } else {
        t.coef *= pc.constant;
      }
      if (t.coef == cplx(0.0)) zero = true;
    }
    if (!zero) f.add_term(std::move(t));
  }
  return f;
}

// Delays of a diagram as the vector expected by its integrand, with fixed
// (contracted) delays filled in.
inline std::vector<double> delay_vector(const FriedrichsDiagram& g, const std::map<int, double>& tau) {
  std::vector<double> out;
  for (int id : g.all_taus()) {
    auto f = g.fixed().find(id);
    if (f != g.fixed().end()) {
      out.push_back(f->second);
      continue;
    }
    auto it = tau.find(id);
    if (it == tau.end()) throw Error("delay_vector: missing delay for line " + std::to_string(id));
    out.push_back(it->second);
  }
  return out;
}

}  // namespace nert
