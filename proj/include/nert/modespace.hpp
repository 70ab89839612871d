#pragma once

// Finite momentum grids, occupation functions, the Gaussian interaction
// kernel family and the two-point table of the doubled reference state.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace nert {

using cplx = std::complex<double>;
inline constexpr cplx I{0.0, 1.0};

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CapacityError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Generators of the doubled algebra.  Species are numbered in the canonical
// normal-ordering block order: a+_+ , a_+ , a_- , a+_- .

enum class Branch : std::int8_t { Minus = -1, Plus = +1 };

struct Generator {
  Branch branch = Branch::Minus;
  bool dagger = false;
  int mode = 0;

  // Position of the species inside a canonically ordered monomial.
  int species() const {
    if (branch == Branch::Plus) return dagger ? 0 : 1;
    return dagger ? 3 : 2;
  }
  // Upper index: +1 for creation symbol, -1 for annihilation symbol.
  int upper() const { return dagger ? +1 : -1; }
  int lower() const { return static_cast<int>(branch); }

  // Free-evolution sign: e^{L0 t} multiplies this generator by
  // exp(i * sigma * eps(k) * t).
  int sigma() const { return upper() * lower(); }

  static Generator from_species(int species, int mode) {
    switch (species) {
      case 0: return {Branch::Plus, true, mode};
      case 1: return {Branch::Plus, false, mode};
      case 2: return {Branch::Minus, false, mode};
      default: return {Branch::Minus, true, mode};
    }
  }

  friend auto operator<=>(const Generator& a, const Generator& b) {
    if (a.species() != b.species()) return a.species() <=> b.species();
    return a.mode <=> b.mode;
  }
  friend bool operator==(const Generator& a, const Generator& b) {
    return a.species() == b.species() && a.mode == b.mode;
  }

  // The star involution swaps branches and keeps the creation/annihilation
  // character.
  Generator starred() const { return {branch == Branch::Plus ? Branch::Minus : Branch::Plus, dagger, mode}; }
};

inline std::string species_name(int s) {
  static const char* names[] = {"a+_+", "a_+", "a_-", "a+_-"};
  return names[s];
}

// ---------------------------------------------------------------------------

class ModeGrid {
 public:
  ModeGrid(int dimension, std::vector<std::vector<double>> modes, std::vector<double> weights, double mu,
           std::vector<std::vector<int>> lattice = {})
      : dim_(dimension), modes_(std::move(modes)), weights_(std::move(weights)), mu_(mu), lattice_(std::move(lattice)) {
    if (modes_.empty()) throw Error("ModeGrid: empty mode list");
    if (weights_.size() != modes_.size()) throw Error("ModeGrid: weight count mismatch");
    if (!(mu_ < 0.0)) throw Error("ModeGrid: chemical potential must be negative");
    for (std::size_t i = 0; i < modes_.size(); ++i) {
      if (static_cast<int>(modes_[i].size()) != dim_) throw Error("ModeGrid: mode dimension mismatch");
      if (!(weights_[i] > 0.0)) throw Error("ModeGrid: weights must be positive");
      for (std::size_t j = 0; j < i; ++j)
        if (modes_[i] == modes_[j]) throw Error("ModeGrid: modes must be distinct");
    }
    if (!lattice_.empty()) {
      for (std::size_t i = 0; i < lattice_.size(); ++i) index_[lattice_[i]] = static_cast<int>(i);
    }
  }

  int dimension() const { return dim_; }
  std::size_t size() const { return modes_.size(); }
  const std::vector<double>& momentum(int i) const { return modes_[i]; }
  double weight(int i) const { return weights_[i]; }
  double mu() const { return mu_; }

  double omega(int i) const {
    double s = 0.0;
    for (double c : modes_[i]) s += c * c;
    return 0.5 * s;
  }
  double energy(int i) const { return omega(i) - mu_; }

  // Index of the mode at lattice point a + b - c, if it lies on the grid.
  std::optional<int> conserve(int a, int b, int c) const {
    if (lattice_.empty()) return std::nullopt;
    std::vector<int> key(dim_);
    for (int d = 0; d < dim_; ++d) key[d] = lattice_[a][d] + lattice_[b][d] - lattice_[c][d];
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool balanced(int p1, int p2, int q1, int q2) const {
    auto q = conserve(p1, p2, q1);
    return q && *q == q2;
  }

  const std::vector<std::vector<double>>& modes() const { return modes_; }

 private:
  int dim_;
  std::vector<std::vector<double>> modes_;
  std::vector<double> weights_;
  double mu_;
  // Doubled integer lattice coordinates; sums of momenta are compared here.
  std::vector<std::vector<int>> lattice_;
  std::map<std::vector<int>, int> index_;
};

// Uniform grid with `extent` points per axis centred on the origin.
inline ModeGrid build_grid(int d, int extent, double spacing, double mu) {
  if (d < 1) throw Error("build_grid: dimension must be >= 1");
  if (extent < 1) throw Error("build_grid: extent must be >= 1");
  if (!(spacing > 0.0)) throw Error("build_grid: spacing must be positive");
  if (!(mu < 0.0)) throw Error("build_grid: mu must be negative");
  std::size_t count = 1;
  for (int i = 0; i < d; ++i) count *= static_cast<std::size_t>(extent);
  std::vector<std::vector<double>> modes;
  std::vector<std::vector<int>> lattice;
  modes.reserve(count);
  for (std::size_t idx = 0; idx < count; ++idx) {
    std::size_t r = idx;
    std::vector<double> k(d);
    std::vector<int> l(d);
    for (int a = d - 1; a >= 0; --a) {
      int j = static_cast<int>(r % extent);
      r /= extent;
      l[a] = 2 * j - (extent - 1);
      k[a] = 0.5 * l[a] * spacing;
    }
    modes.push_back(std::move(k));
    lattice.push_back(std::move(l));
  }
  std::vector<double> weights(count, std::pow(spacing, d));
  return ModeGrid(d, std::move(modes), std::move(weights), mu, std::move(lattice));
}

// ---------------------------------------------------------------------------

struct VacuumForm {};
struct PlanckForm {
  double beta = 1.0;
};
struct GaussianForm {
  double n0 = 0.0;
  double b = 1.0;
};
using OccupationSpec = std::variant<VacuumForm, PlanckForm, GaussianForm>;

class OccupationField {
 public:
  OccupationField(const ModeGrid& grid, const OccupationSpec& spec) : spec_(spec) {
    n_.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      double v = value_at(grid.momentum(static_cast<int>(i)), grid.mu());
      if (!std::isfinite(v) || v < 0.0) throw Error("occupation: non-finite or negative value");
      n_[i] = v;
    }
  }

  double operator[](int mode) const { return n_[mode]; }
  std::size_t size() const { return n_.size(); }
  const OccupationSpec& spec() const { return spec_; }
  bool is_vacuum() const { return std::holds_alternative<VacuumForm>(spec_); }

  // Pointwise formula, usable off-grid.
  double value_at(const std::vector<double>& k, double mu) const {
    double k2 = 0.0;
    for (double c : k) k2 += c * c;
    return std::visit(
        [&](const auto& f) -> double {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, VacuumForm>) {
            return 0.0;
          } else if constexpr (std::is_same_v<F, PlanckForm>) {
            if (!(f.beta > 0.0)) throw Error("occupation: beta must be positive");
            double x = f.beta * (0.5 * k2 - mu);
            if (!(x > 0.0)) throw Error("occupation: omega - mu must be positive");
            double e = std::exp(-x);
            return e / (1.0 - e);
          } else {
            if (f.n0 < 0.0 || f.b < 0.0) throw Error("occupation: Gaussian form needs n0 >= 0, b >= 0");
            return f.n0 * std::exp(-f.b * k2);
          }
        },
        spec_);
  }

 private:
  OccupationSpec spec_;
  std::vector<double> n_;
};

inline OccupationField occupation(const ModeGrid& grid, const OccupationSpec& spec) { return {grid, spec}; }

// ---------------------------------------------------------------------------

// v(p1,p2|q1,q2) = c * exp(-a (p1^2 + p2^2 + q1^2 + q2^2)).
struct InteractionKernel {
  cplx amplitude{1.0, 0.0};
  double width = 0.5;

  InteractionKernel() = default;
  InteractionKernel(cplx c, double a) : amplitude(c), width(a) {
    if (!(a > 0.0)) throw Error("InteractionKernel: width must be positive");
  }

  static double sq(const std::vector<double>& p) {
    double s = 0.0;
    for (double c : p) s += c * c;
    return s;
  }

  cplx operator()(const std::vector<double>& p1, const std::vector<double>& p2, const std::vector<double>& q1,
                  const std::vector<double>& q2) const {
    return amplitude * std::exp(-width * (sq(p1) + sq(p2) + sq(q1) + sq(q2)));
  }

  bool is_real() const { return amplitude.imag() == 0.0; }
};

// ---------------------------------------------------------------------------
// Two-point table of the doubled Gaussian state on the diagonal k = k'.
// Returned as the pair (constant part, coefficient of n(k)) so callers can
// expand 1 + n into separate Gaussian terms.

struct PairingCoefficient {
  double constant = 0.0;
  double occupation = 0.0;
  double value(double n) const { return constant + occupation * n; }
  bool zero() const { return constant == 0.0 && occupation == 0.0; }
};

// rho0'(x y) / delta(k - k') for the ordered product x y.
inline PairingCoefficient pairing(const Generator& x, const Generator& y) {
  const int ux = x.upper(), uy = y.upper();
  // Within one branch, and across branches, the only non-vanishing ordered
  // pairs are (creation, annihilation) -> n and (annihilation, creation) -> 1+n
  // for equal branches; for mixed branches the two creators pair to 1+n and
  // the two annihilators to n.
  if (x.branch == y.branch) {
    if (ux == +1 && uy == -1) return {0.0, 1.0};
    if (ux == -1 && uy == +1) return {1.0, 1.0};
    return {};
  }
  if (ux == -1 && uy == -1) return {0.0, 1.0};
  if (ux == +1 && uy == +1) return {1.0, 1.0};
  return {};
}

inline double pairing_value(const Generator& x, const Generator& y, const OccupationField& n) {
  if (x.mode != y.mode) return 0.0;
  return pairing(x, y).value(n[x.mode]);
}

// G(Or, g+, g-)(p): the line factor of a Friedrichs diagram.  The upper end
// carries a^{sgn(-Or g+)}_{g+}, the lower end a^{sgn(Or g-)}_{g-}.
inline PairingCoefficient propagator(int orientation, int g_plus, int g_minus) {
  if ((orientation != 1 && orientation != -1) || (g_plus != 1 && g_plus != -1) || (g_minus != 1 && g_minus != -1))
    throw Error("propagator: sign triple must be +-1");
  Generator upper{static_cast<Branch>(g_plus), -orientation * g_plus == +1, 0};
  Generator lower{static_cast<Branch>(g_minus), orientation * g_minus == +1, 0};
  return pairing(upper, lower);
}

inline double propagator(int orientation, int g_plus, int g_minus, double n) {
  return propagator(orientation, g_plus, g_minus).value(n);
}

}  // namespace nert
