#pragma once

// Normal-ordered polynomials in the doubled generators and the Wick calculus
// with respect to the reference state.  Normal products are symmetric, so a
// monomial is a sorted multiset of generators in the canonical block order.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "nert/fock.hpp"
#include "nert/modespace.hpp"

namespace nert {

using Monomial = std::vector<Generator>;

inline Monomial sorted(Monomial m) {
  std::sort(m.begin(), m.end());
  return m;
}

inline double phase_rate(const ModeGrid& g, const Monomial& m) {
  double s = 0.0;
  for (const auto& x : m) s += x.sigma() * g.energy(x.mode);
  return s;
}

// Two-point function of the reference state in the weighted normalization.
class WickContext {
 public:
  WickContext(const ModeGrid& grid, const OccupationField& n) : grid_(&grid), n_(&n) {}

  cplx contract(const Generator& x, const Generator& y) const {
    if (x.mode != y.mode) return 0.0;
    PairingCoefficient c = pairing(x, y);
    if (c.zero()) return 0.0;
    return c.value((*n_)[x.mode]) / grid_->weight(x.mode);
  }

  const ModeGrid& grid() const { return *grid_; }
  const OccupationField& occupation() const { return *n_; }

 private:
  const ModeGrid* grid_;
  const OccupationField* n_;
};

class NormalPolynomial {
 public:
  using Map = std::map<Monomial, cplx>;

  NormalPolynomial() = default;
  static NormalPolynomial constant(cplx c) {
    NormalPolynomial p;
    p.add({}, c);
    return p;
  }
  static NormalPolynomial monomial(Monomial m, cplx c = 1.0) {
    NormalPolynomial p;
    p.add(sorted(std::move(m)), c);
    return p;
  }

  void add(const Monomial& m, cplx c) {
    if (c == cplx(0.0)) return;
    auto [it, fresh] = terms_.emplace(m, c);
    if (!fresh) {
      it->second += c;
      if (it->second == cplx(0.0)) terms_.erase(it);
    }
  }

  const Map& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }
  std::size_t size() const { return terms_.size(); }
  std::size_t degree() const {
    std::size_t d = 0;
    for (const auto& [m, c] : terms_) d = std::max(d, m.size());
    return d;
  }
  cplx coefficient(const Monomial& m) const {
    auto it = terms_.find(m);
    return it == terms_.end() ? cplx(0.0) : it->second;
  }

  NormalPolynomial& operator+=(const NormalPolynomial& o) {
    for (const auto& [m, c] : o.terms_) add(m, c);
    return *this;
  }
  NormalPolynomial& operator*=(cplx s) {
    if (s == cplx(0.0)) {
      terms_.clear();
      return *this;
    }
    for (auto& [m, c] : terms_) c *= s;
    return *this;
  }
  friend NormalPolynomial operator+(NormalPolynomial a, const NormalPolynomial& b) { return a += b; }
  friend NormalPolynomial operator-(NormalPolynomial a, const NormalPolynomial& b) {
    for (const auto& [m, c] : b.terms_) a.add(m, -c);
    return a;
  }
  friend NormalPolynomial operator*(cplx s, NormalPolynomial a) { return a *= s; }

  double max_abs() const {
    double r = 0.0;
    for (const auto& [m, c] : terms_) r = std::max(r, std::abs(c));
    return r;
  }

  // Largest coefficient difference, relative to the larger operand.
  friend double distance(const NormalPolynomial& a, const NormalPolynomial& b) {
    NormalPolynomial d = a - b;
    double s = std::max({a.max_abs(), b.max_abs(), 1e-300});
    return d.max_abs() / s;
  }

  friend bool operator==(const NormalPolynomial& a, const NormalPolynomial& b) { return a.terms_ == b.terms_; }
  friend bool operator<(const NormalPolynomial& a, const NormalPolynomial& b) {
    return std::lexicographical_compare(a.terms_.begin(), a.terms_.end(), b.terms_.begin(), b.terms_.end(),
                                        [](const auto& x, const auto& y) {
                                          if (x.first != y.first) return x.first < y.first;
                                          if (x.second.real() != y.second.real()) return x.second.real() < y.second.real();
                                          return x.second.imag() < y.second.imag();
                                        });
  }

 private:
  Map terms_;
};

// Concatenation :a b: without contractions.
inline Monomial concat(const Monomial& a, const Monomial& b) {
  Monomial m = a;
  m.insert(m.end(), b.begin(), b.end());
  return sorted(std::move(m));
}

inline NormalPolynomial concat(const NormalPolynomial& a, const NormalPolynomial& b) {
  NormalPolynomial out;
  for (const auto& [ma, ca] : a.terms())
    for (const auto& [mb, cb] : b.terms()) out.add(concat(ma, mb), ca * cb);
  return out;
}

// All contraction patterns of the ordered product :a: :b:.  `visit` receives
// (coefficient, remaining monomial, mask of touched positions of b).
template <class Visit>
void contractions(const WickContext& w, const Monomial& a, const Monomial& b, Visit&& visit) {
  std::vector<char> used_a(a.size(), 0), used_b(b.size(), 0);
  std::function<void(std::size_t, cplx)> rec = [&](std::size_t i, cplx c) {
    if (i == a.size()) {
      Monomial rest;
      for (std::size_t k = 0; k < a.size(); ++k)
        if (!used_a[k]) rest.push_back(a[k]);
      for (std::size_t k = 0; k < b.size(); ++k)
        if (!used_b[k]) rest.push_back(b[k]);
      visit(c, sorted(std::move(rest)), used_b);
      return;
    }
    rec(i + 1, c);
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (used_b[j]) continue;
      cplx r = w.contract(a[i], b[j]);
      if (r == cplx(0.0)) continue;
      used_a[i] = used_b[j] = 1;
      rec(i + 1, c * r);
      used_a[i] = used_b[j] = 0;
    }
  };
  rec(0, 1.0);
}

// Product of normal-ordered polynomials, re-expressed in normal form.
inline NormalPolynomial multiply(const WickContext& w, const NormalPolynomial& a, const NormalPolynomial& b) {
  NormalPolynomial out;
  for (const auto& [ma, ca] : a.terms())
    for (const auto& [mb, cb] : b.terms())
      contractions(w, ma, mb, [&](cplx c, Monomial rest, const std::vector<char>&) { out.add(rest, ca * cb * c); });
  return out;
}

// Normal form of the operator string x_1 x_2 ... x_k (x_k acts first).
inline NormalPolynomial normal_form(const WickContext& w, const std::vector<Generator>& word, cplx coef = 1.0) {
  NormalPolynomial acc = NormalPolynomial::constant(coef);
  for (auto it = word.rbegin(); it != word.rend(); ++it) acc = multiply(w, NormalPolynomial::monomial({*it}), acc);
  return acc;
}

// The interaction part of the von Neumann operator as an element of the
// doubled algebra acting from the left:
//   -i sum w^3 v a+_-(p1) a+_-(p2) a_-(q1) a_-(q2)
//   +i sum w^3 v* a+_+(p1) a+_+(p2) a_+(q1) a_+(q2)
// in normal form.  The factor w^3 is the weight cube of the discretized
// delta-constrained integral in weighted generators.
inline NormalPolynomial interaction_polynomial(const WickContext& w, const InteractionKernel& kernel,
                                               int branches = 3) {
  const ModeGrid& g = w.grid();
  const int m = static_cast<int>(g.size());
  NormalPolynomial out;
  for (int p1 = 0; p1 < m; ++p1)
    for (int p2 = 0; p2 < m; ++p2)
      for (int q1 = 0; q1 < m; ++q1) {
        auto q2 = g.conserve(p1, p2, q1);
        if (!q2) continue;
        const double w3 = g.weight(p1) * g.weight(p2) * g.weight(q1);
        cplx v = kernel(g.momentum(p1), g.momentum(p2), g.momentum(q1), g.momentum(*q2));
        if (branches & 1)
          out += normal_form(w,
                             {{Branch::Minus, true, p1}, {Branch::Minus, true, p2}, {Branch::Minus, false, q1},
                              {Branch::Minus, false, *q2}},
                             -I * w3 * v);
        if (branches & 2)
          out += normal_form(w,
                             {{Branch::Plus, true, p1}, {Branch::Plus, true, p2}, {Branch::Plus, false, q1},
                              {Branch::Plus, false, *q2}},
                             I * w3 * std::conj(v));
      }
  return out;
}

// Same vertices without self-contractions, i.e. the interaction normal
// ordered with respect to the reference state.
inline NormalPolynomial quartic_interaction(const WickContext& w, const InteractionKernel& kernel) {
  const ModeGrid& g = w.grid();
  const int m = static_cast<int>(g.size());
  NormalPolynomial out;
  for (int p1 = 0; p1 < m; ++p1)
    for (int p2 = 0; p2 < m; ++p2)
      for (int q1 = 0; q1 < m; ++q1) {
        auto q2 = g.conserve(p1, p2, q1);
        if (!q2) continue;
        const double w3 = g.weight(p1) * g.weight(p2) * g.weight(q1);
        cplx v = kernel(g.momentum(p1), g.momentum(p2), g.momentum(q1), g.momentum(*q2));
        out.add(sorted({{Branch::Minus, true, p1}, {Branch::Minus, true, p2}, {Branch::Minus, false, q1},
                        {Branch::Minus, false, *q2}}),
                -I * w3 * v);
        out.add(sorted({{Branch::Plus, true, p1}, {Branch::Plus, true, p2}, {Branch::Plus, false, q1},
                        {Branch::Plus, false, *q2}}),
                I * w3 * std::conj(v));
      }
  return out;
}

// Multiplies every monomial by exp(i t Phi(m)), the free evolution e^{L0 t}.
inline NormalPolynomial free_evolve(const ModeGrid& g, const NormalPolynomial& p, double t) {
  NormalPolynomial out;
  for (const auto& [m, c] : p.terms()) out.add(m, c * std::exp(I * (t * phase_rate(g, m))));
  return out;
}

// Swaps branches and conjugates coefficients.
inline NormalPolynomial star_involution(const NormalPolynomial& p) {
  NormalPolynomial out;
  for (const auto& [m, c] : p.terms()) {
    Monomial s;
    for (const auto& x : m) s.push_back(x.starred());
    out.add(sorted(std::move(s)), std::conj(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Realization of :m: applied to the cyclic vector as a density array.  The
// outermost factor is peeled off first, creation-type actions before
// annihilation-type ones, so truncation is met as late as possible:
//   :x m: = x :m: - sum_y rho0'(x y) :m \ y:.

namespace detail {

inline bool raising(const Generator& x) { return x.dagger; }

inline std::size_t peel_index(const Monomial& m) {
  for (std::size_t i = 0; i < m.size(); ++i)
    if (raising(m[i])) return i;
  return 0;
}

}  // namespace detail

inline Mat realize(const DoubledRep& rep, const WickContext& w, const Mat& cyclic, const NormalPolynomial& p) {
  Mat out = Mat::Zero(cyclic.rows(), cyclic.cols());
  if (p.empty()) return out;
  std::map<Generator, NormalPolynomial> groups;
  NormalPolynomial lower;
  for (const auto& [m, c] : p.terms()) {
    if (m.empty()) {
      out += c * cyclic;
      continue;
    }
    std::size_t i = detail::peel_index(m);
    Generator x = m[i];
    Monomial rest = m;
    rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(i));
    groups[x].add(rest, c);
    for (std::size_t j = 0; j < rest.size(); ++j) {
      cplx r = w.contract(x, rest[j]);
      if (r == cplx(0.0)) continue;
      Monomial r2 = rest;
      r2.erase(r2.begin() + static_cast<std::ptrdiff_t>(j));
      lower.add(r2, -c * r);
    }
  }
  for (const auto& [x, px] : groups) out += rep.apply_weighted(x, realize(rep, w, cyclic, px));
  if (!lower.empty()) out += realize(rep, w, cyclic, lower);
  return out;
}

// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const NormalPolynomial& p) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& [m, c] : p.terms()) {
    nlohmann::json sig = nlohmann::json::array(), modes = nlohmann::json::array();
    for (const auto& x : m) {
      sig.push_back(species_name(x.species()));
      modes.push_back(x.mode);
    }
    terms.push_back({{"signature", sig}, {"modes", modes}, {"value", {c.real(), c.imag()}}});
  }
  return {{"terms", terms}};
}

inline NormalPolynomial polynomial_from_json(const nlohmann::json& j) {
  static const std::map<std::string, int> species{{"a+_+", 0}, {"a_+", 1}, {"a_-", 2}, {"a+_-", 3}};
  NormalPolynomial p;
  for (const auto& t : j.at("terms")) {
    Monomial m;
    const auto& sig = t.at("signature");
    const auto& modes = t.at("modes");
    for (std::size_t i = 0; i < sig.size(); ++i)
      m.push_back(Generator::from_species(species.at(sig[i].get<std::string>()), modes[i].get<int>()));
    p.add(sorted(m), {t.at("value")[0].get<double>(), t.at("value")[1].get<double>()});
  }
  return p;
}

}  // namespace nert
