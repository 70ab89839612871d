#pragma once

// Dynamics of correlations: correlation vectors as symmetrized products of
// normal-ordered factors, the splitting of the interaction by the number of
// factors it couples to, the flattening map, tree operators and the tree
// expansion of the interaction-picture evolution.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "nert/poly.hpp"
#include "nert/trees.hpp"

namespace nert {

struct CorrelationTerm {
  cplx coefficient = 1.0;
  std::vector<NormalPolynomial> factors;
};

class CorrelationVector {
 public:
  CorrelationVector() = default;
  explicit CorrelationVector(std::vector<CorrelationTerm> t) : terms_(std::move(t)) {}

  static CorrelationVector cyclic() { return CorrelationVector({CorrelationTerm{1.0, {}}}); }
  static CorrelationVector of(std::vector<NormalPolynomial> factors, cplx c = 1.0) {
    return CorrelationVector({CorrelationTerm{c, std::move(factors)}});
  }

  const std::vector<CorrelationTerm>& terms() const { return terms_; }
  void add(CorrelationTerm t) {
    if (t.coefficient != cplx(0.0)) terms_.push_back(std::move(t));
  }
  CorrelationVector& operator+=(const CorrelationVector& o) {
    for (const auto& t : o.terms_) terms_.push_back(t);
    return *this;
  }
  bool empty() const { return terms_.empty(); }

  // Symmetrization: factors of each term in canonical order.
  CorrelationVector sym() const {
    CorrelationVector out = *this;
    for (auto& t : out.terms_) std::sort(t.factors.begin(), t.factors.end());
    std::sort(out.terms_.begin(), out.terms_.end(), [](const CorrelationTerm& a, const CorrelationTerm& b) {
      if (a.factors.size() != b.factors.size()) return a.factors.size() < b.factors.size();
      return std::lexicographical_compare(a.factors.begin(), a.factors.end(), b.factors.begin(), b.factors.end());
    });
    return out;
  }

  friend bool operator==(const CorrelationVector& a, const CorrelationVector& b) {
    if (a.terms_.size() != b.terms_.size()) return false;
    for (std::size_t i = 0; i < a.terms_.size(); ++i)
      if (a.terms_[i].coefficient != b.terms_[i].coefficient || !(a.terms_[i].factors == b.terms_[i].factors))
        return false;
    return true;
  }

 private:
  std::vector<CorrelationTerm> terms_;
};

// :f1 ... fn: for every term; cross-factor contractions never appear.
inline NormalPolynomial flatten_F(const CorrelationVector& v) {
  NormalPolynomial out;
  for (const auto& t : v.terms()) {
    NormalPolynomial p = NormalPolynomial::constant(t.coefficient);
    for (const auto& f : t.factors) p = concat(p, f);
    out += p;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Polynomials whose coefficients carry per-vertex phases exp(i sum_v r_v s_v).

using RateVector = std::vector<double>;

class TimedPolynomial {
 public:
  using Key = std::pair<Monomial, RateVector>;
  using Map = std::map<Key, cplx>;

  explicit TimedPolynomial(std::size_t vertices = 0) : n_(vertices) {}

  static TimedPolynomial from_static(const NormalPolynomial& p, std::size_t vertices) {
    TimedPolynomial t(vertices);
    for (const auto& [m, c] : p.terms()) t.add(m, RateVector(vertices, 0.0), c);
    return t;
  }

  void add(const Monomial& m, const RateVector& r, cplx c) {
    if (c == cplx(0.0)) return;
    auto [it, fresh] = terms_.emplace(Key{m, r}, c);
    if (!fresh) it->second += c;
  }

  const Map& terms() const { return terms_; }
  std::size_t vertices() const { return n_; }
  std::size_t size() const { return terms_.size(); }

  // Value at explicit vertex times.
  NormalPolynomial at(const std::vector<double>& s) const {
    NormalPolynomial out;
    for (const auto& [k, c] : terms_) {
      double ph = 0.0;
      for (std::size_t v = 0; v < n_; ++v) ph += k.second[v] * s[v];
      out.add(k.first, c * std::exp(I * ph));
    }
    return out;
  }

 private:
  std::size_t n_;
  Map terms_;
};

inline TimedPolynomial concat(const TimedPolynomial& a, const TimedPolynomial& b) {
  TimedPolynomial out(a.vertices());
  for (const auto& [ka, ca] : a.terms())
    for (const auto& [kb, cb] : b.terms()) {
      RateVector r = ka.second;
      for (std::size_t i = 0; i < r.size(); ++i) r[i] += kb.second[i];
      out.add(concat(ka.first, kb.first), r, ca * cb);
    }
  return out;
}

// L_int(s_v) applied to the product of `inputs`, keeping the terms in which
// every input is contracted at least once.  The rate of vertex v becomes
// Phi(inputs) - Phi(output).  With no inputs this is e^{-L0 s} L_int on the
// cyclic vector.
inline TimedPolynomial vertex_action(const WickContext& w, const NormalPolynomial& lint,
                                     const std::vector<TimedPolynomial>& inputs, std::size_t vertex,
                                     std::size_t vertices) {
  TimedPolynomial out(vertices);
  const ModeGrid& g = w.grid();
  std::vector<const TimedPolynomial::Map::value_type*> pick(inputs.size());
  std::function<void(std::size_t)> choose = [&](std::size_t i) {
    if (i < inputs.size()) {
      for (const auto& kv : inputs[i].terms()) {
        pick[i] = &kv;
        choose(i + 1);
      }
      return;
    }
    Monomial target;
    std::vector<int> group;
    RateVector rate(vertices, 0.0);
    cplx coef = 1.0;
    for (std::size_t k = 0; k < pick.size(); ++k) {
      const auto& [key, c] = *pick[k];
      for (const auto& x : key.first) {
        target.push_back(x);
        group.push_back(static_cast<int>(k));
      }
      for (std::size_t v = 0; v < vertices; ++v) rate[v] += key.second[v];
      coef *= c;
    }
    const double phi_in = phase_rate(g, target);
    for (const auto& [ml, cl] : lint.terms()) {
      contractions(w, ml, target, [&](cplx cc, Monomial rest, const std::vector<char>& used) {
        std::vector<char> hit(inputs.size(), 0);
        for (std::size_t j = 0; j < used.size(); ++j)
          if (used[j]) hit[group[j]] = 1;
        for (char h : hit)
          if (!h) return;
        RateVector r = rate;
        r[vertex] += phi_in - phase_rate(g, rest);
        out.add(rest, r, coef * cl * cc);
      });
    }
  };
  choose(0);
  return out;
}

// ---------------------------------------------------------------------------
// L_int^{c,l}: the interaction contracted with exactly l factors of each
// term (every one of them at least once); the result replaces them by one
// new factor.  l = 0 appends L_int itself.

inline CorrelationVector wick_split(const WickContext& w, const NormalPolynomial& lint, int l,
                                    const CorrelationVector& v) {
  CorrelationVector out;
  for (const auto& term : v.terms()) {
    const int n = static_cast<int>(term.factors.size());
    if (l > n || l < 0) continue;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      if (std::popcount(mask) != l) continue;
      std::vector<TimedPolynomial> in;
      std::vector<NormalPolynomial> rest;
      for (int i = 0; i < n; ++i) {
        if (mask & (1u << i))
          in.push_back(TimedPolynomial::from_static(term.factors[i], 1));
        else
          rest.push_back(term.factors[i]);
      }
      TimedPolynomial nf = vertex_action(w, lint, in, 0, 1);
      NormalPolynomial f;
      for (const auto& [k, c] : nf.terms()) f.add(k.first, c);
      if (f.empty()) continue;
      rest.push_back(std::move(f));
      out.add({term.coefficient, std::move(rest)});
    }
  }
  return out.sym();
}

// ---------------------------------------------------------------------------
// Exponential polynomials sum_k p_k(s) e^{i nu_k s}, used to integrate tree
// phases over the ordered time region in closed form.

class ExpPoly {
 public:
  using Poly = std::vector<cplx>;

  static ExpPoly one() {
    ExpPoly e;
    e.terms_[0.0] = {1.0};
    return e;
  }
  static ExpPoly wave(double nu) {
    ExpPoly e;
    e.terms_[nu] = {1.0};
    return e;
  }

  ExpPoly operator*(const ExpPoly& o) const {
    ExpPoly r;
    for (const auto& [na, pa] : terms_)
      for (const auto& [nb, pb] : o.terms_) {
        Poly& p = r.slot(na + nb);
        if (p.size() < pa.size() + pb.size() - 1) p.resize(pa.size() + pb.size() - 1, 0.0);
        for (std::size_t i = 0; i < pa.size(); ++i)
          for (std::size_t j = 0; j < pb.size(); ++j) p[i + j] += pa[i] * pb[j];
      }
    return r;
  }

  cplx operator()(double s) const {
    cplx v = 0.0;
    for (const auto& [nu, p] : terms_) {
      cplx q = 0.0;
      for (std::size_t i = p.size(); i-- > 0;) q = q * s + p[i];
      v += q * std::exp(I * (nu * s));
    }
    return v;
  }

  // x -> integral from a to x.
  ExpPoly integral_from(double a) const {
    ExpPoly r;
    cplx at_a = 0.0;
    for (const auto& [nu, p] : terms_) {
      Poly anti = antiderivative(nu, p);
      cplx q = 0.0;
      for (std::size_t i = anti.size(); i-- > 0;) q = q * a + anti[i];
      at_a += q * std::exp(I * (nu * a));
      Poly& dst = r.slot(nu);
      if (dst.size() < anti.size()) dst.resize(anti.size(), 0.0);
      for (std::size_t i = 0; i < anti.size(); ++i) dst[i] += anti[i];
    }
    Poly& c = r.slot(0.0);
    if (c.empty()) c.resize(1, 0.0);
    c[0] -= at_a;
    return r;
  }

 private:
  static constexpr double zero_rate = 1e-12;

  Poly& slot(double nu) {
    for (auto& [k, p] : terms_)
      if (std::abs(k - nu) <= zero_rate) return p;
    return terms_[nu];
  }

  // Polynomial q with (q e^{i nu s})' = p e^{i nu s}.
  static Poly antiderivative(double nu, const Poly& p) {
    if (std::abs(nu) <= zero_rate) {
      Poly q(p.size() + 1, 0.0);
      for (std::size_t i = 0; i < p.size(); ++i) q[i + 1] = p[i] / static_cast<double>(i + 1);
      return q;
    }
    // q' + i nu q = p, solved from the top degree down.
    const cplx inu = I * nu;
    Poly q(p.size(), 0.0);
    for (std::size_t k = p.size(); k-- > 0;) {
      cplx next = (k + 1 < q.size()) ? static_cast<double>(k + 1) * q[k + 1] : cplx(0.0);
      q[k] = (p[k] - next) / inu;
    }
    return q;
  }

  std::map<double, Poly> terms_;
};

// Integral of exp(i sum_v r_v s_v) over t0 <= s_v <= t with every child
// earlier than its parent.
inline cplx ordered_region_integral(const DirectedTree& t, const RateVector& rate, double t0, double t1) {
  std::function<ExpPoly(int)> rec = [&](int v) {
    ExpPoly f = ExpPoly::wave(rate[v - 1]);
    for (int c : t.children(v)) f = f * rec(c);
    return f.integral_from(t0);
  };
  cplx total = 1.0;
  for (const auto& comp : t.components()) total *= rec(t.top(comp[0]))(t1);
  return total;
}

// ---------------------------------------------------------------------------

// Output of a tree at per-vertex times: one timed factor per root line.
struct TreeOperator {
  DirectedTree tree;
  std::vector<int> roots;
  std::vector<TimedPolynomial> factors;

  TimedPolynomial flattened() const {
    TimedPolynomial p = TimedPolynomial::from_static(NormalPolynomial::constant(1.0), tree.vertex_count());
    for (const auto& f : factors) p = concat(p, f);
    return p;
  }
};

// Von Neumann labelling: vertex v applies L_int^{c,l_v} with l_v the number
// of incoming lines.  Shoot inputs are interaction-picture factors keyed by
// shoot label.  Vertex labels must be 1..n.
inline TreeOperator tree_operator(const WickContext& w, const NormalPolynomial& lint, const DirectedTree& t,
                                  const std::map<int, NormalPolynomial>& shoots = {}) {
  if (!t.right()) throw Error("tree_operator: tree must be right and acyclic");
  const std::size_t n = static_cast<std::size_t>(t.vertex_count());
  for (std::size_t i = 0; i < n; ++i)
    if (t.vertices()[i] != static_cast<int>(i) + 1) throw Error("tree_operator: vertex labels must be 1..n");
  std::map<int, TimedPolynomial> memo;
  std::function<TimedPolynomial(int)> rec = [&](int v) {
    std::vector<TimedPolynomial> in;
    for (int c : t.children(v)) in.push_back(rec(c));
    for (int s : t.shoots_at(v)) {
      auto it = shoots.find(s);
      if (it == shoots.end()) throw Error("tree_operator: missing shoot input " + std::to_string(s));
      in.push_back(TimedPolynomial::from_static(it->second, n));
    }
    return vertex_action(w, lint, in, static_cast<std::size_t>(v - 1), n);
  };
  TreeOperator op{t, {}, {}};
  for (const auto& comp : t.components()) {
    int r = t.top(comp[0]);
    op.roots.push_back(r);
    op.factors.push_back(rec(r));
  }
  return op;
}

// Vertex times from line delays at observation time t: the root line of a
// component carries t - s_root, an internal line s_parent - s_child.
inline std::vector<double> vertex_times(const DirectedTree& t, const std::map<int, double>& tau, double obs) {
  std::vector<double> s(t.vertex_count(), 0.0);
  std::function<void(int, double)> down = [&](int v, double sv) {
    s[v - 1] = sv;
    for (int c : t.children(v)) down(c, sv - tau.at(t.up_line(c)->id));
  };
  for (const auto& comp : t.components()) {
    int r = t.top(comp[0]);
    down(r, obs - tau.at(t.up_line(r)->id));
  }
  return s;
}

// U^t_T(tau) applied to the cyclic vector, flattened.
inline NormalPolynomial tree_value(const TreeOperator& op, const std::map<int, double>& tau, double obs) {
  return op.flattened().at(vertex_times(op.tree, tau, obs));
}

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// Sum over right shootless forests T with n vertices of (1/n!) times the
// integral of V^t_T over the admissible delays inside [t0, t1], flattened.
// Integration is exact: the phases are integrated as exponential
// polynomials over the ordered region, one integral per distinct rate vector.
inline NormalPolynomial tree_expansion(const WickContext& w, const NormalPolynomial& lint, int order, double t1,
                                       double t0, int max_in = 4) {
  if (order < 0 || order > 3) throw Error("tree_expansion: order must be in 0..3");
  if (t1 < t0) throw Error("tree_expansion: requires t >= t''");
  if (order == 0) return NormalPolynomial::constant(1.0);
  NormalPolynomial out;
  const double norm = 1.0 / factorial(order);
  for (const auto& tree : enumerate_trees(order, 0, {max_in, false})) {
    TimedPolynomial p = tree_operator(w, lint, tree).flattened();
    std::map<RateVector, cplx> cache;
    for (const auto& [k, c] : p.terms()) {
      auto it = cache.find(k.second);
      if (it == cache.end()) it = cache.emplace(k.second, ordered_region_integral(tree, k.second, t0, t1)).first;
      out.add(k.first, norm * c * it->second);
    }
  }
  return out;
}

// First-order U^c(t1, t0) on a correlation vector: every split l, with the
// contracted factors dressed by e^{L0 s} and the new factor by e^{-L0 s},
// integrated over s in [t0, t1].
inline CorrelationVector uc_order1(const WickContext& w, const NormalPolynomial& lint, const CorrelationVector& v,
                                   double t1, double t0) {
  CorrelationVector out;
  for (const auto& term : v.terms()) {
    const int n = static_cast<int>(term.factors.size());
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      std::vector<TimedPolynomial> in;
      std::vector<NormalPolynomial> rest;
      for (int i = 0; i < n; ++i) {
        if (mask & (1u << i))
          in.push_back(TimedPolynomial::from_static(term.factors[i], 1));
        else
          rest.push_back(term.factors[i]);
      }
      TimedPolynomial nf = vertex_action(w, lint, in, 0, 1);
      NormalPolynomial f;
      for (const auto& [k, c] : nf.terms()) {
        const double r = k.second[0];
        cplx integral = (std::abs(r) <= 1e-12) ? cplx(t1 - t0)
                                               : (std::exp(I * (r * t1)) - std::exp(I * (r * t0))) / (I * r);
        f.add(k.first, c * integral);
      }
      if (f.empty()) continue;
      rest.push_back(std::move(f));
      out.add({term.coefficient, std::move(rest)});
    }
  }
  return out.sym();
}

}  // namespace nert
