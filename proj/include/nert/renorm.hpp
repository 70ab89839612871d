#pragma once

// Renormalization of diagram amplitudes in the inverse-delay variables
// s = 1/tau: windows and the sector partition, test functions with their
// Taylor jets, moment counterterms, the renormalized pairing, the
// time-translation correction of the counterterms and, on a mode grid, the
// first-order counterterm vector.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nert/corrdyn.hpp"
#include "nert/friedrichs.hpp"
#include "nert/gausscalc.hpp"
#include "nert/parallel.hpp"
#include "nert/quadrature.hpp"

namespace nert {

using MultiIndex = std::vector<int>;

// ---------------------------------------------------------------------------
// Smooth step, window xi, partition eta_A, bump psi and the smearing delta.

inline double smooth_step(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double a = std::exp(-1.0 / x), b = std::exp(-1.0 / (1.0 - x));
  return a / (a + b);
}

inline double smooth_step_derivative(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  double a = std::exp(-1.0 / x), b = std::exp(-1.0 / (1.0 - x));
  double s = a + b;
  if (s == 0.0) return 0.0;
  return a * b * (1.0 / (x * x) + 1.0 / ((1.0 - x) * (1.0 - x))) / (s * s);
}

// xi = 1 on [0, flat], 0 beyond edge.
struct Window {
  double flat = 1.0 / 12.0;
  double edge = 1.0 / 6.0;
  double operator()(double s) const { return 1.0 - smooth_step((s - flat) / (edge - flat)); }
  double derivative(double s) const { return -smooth_step_derivative((s - flat) / (edge - flat)) / (edge - flat); }
};

// Preset for trees with up to n vertices: support [0, 1/(3n)].
inline Window window_for(int n) {
  if (n < 1) throw Error("window_for: n must be positive");
  const double e = 1.0 / (3.0 * n);
  return {0.5 * e, e};
}

inline double eta(unsigned subset, const std::vector<double>& s, const Window& xi) {
  double v = 1.0;
  for (std::size_t i = 0; i < s.size(); ++i) v *= (subset & (1u << i)) ? 1.0 - xi(s[i]) : xi(s[i]);
  return v;
}

// psi: normalized bump on [-1/10, 1/10].
inline double bump_psi(double u) {
  static const double norm = [] {
    double err = 0.0;
    double i = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [](double v) { return std::abs(v) < 1.0 ? std::exp(-1.0 / (1.0 - v * v)) : 0.0; }, -1.0, 1.0, 20, 1e-15,
        &err);
    return 1.0 / (0.1 * i);
  }();
  const double v = 10.0 * u;
  if (std::abs(v) >= 1.0) return 0.0;
  return norm * std::exp(-1.0 / (1.0 - v * v));
}

// delta_lambda(x - lambda) = (x / lambda^2) psi(x / lambda - 1).
inline double delta_lambda(double x, double lambda) { return x / (lambda * lambda) * bump_psi(x / lambda - 1.0); }

inline Integral delta_normalization(double x) {
  return integrate([&](double l) { return cplx(delta_lambda(x, l)); }, x / 1.1, x / 0.9, 1e-14, 20);
}

// ---------------------------------------------------------------------------
// Test functions on (R+)^n.  The jet gives (1/k!) d^k / ds_B^k at s_B = 0
// with the other coordinates at s.

struct TestFunction {
  int n = 1;
  double support = 1.0;
  std::function<cplx(const std::vector<double>&)> value;
  std::function<cplx(unsigned, const MultiIndex&, const std::vector<double>&)> jet;
  cplx operator()(const std::vector<double>& s) const { return value(s); }
  // Taylor coefficient at the origin.
  cplx coefficient(const MultiIndex& k) const { return jet((1u << n) - 1, k, std::vector<double>(n, 0.0)); }
};

using ProbePoly = std::map<MultiIndex, cplx>;

// chi = 1 on [0, 1/2], 0 beyond 1.
inline double cutoff(double x) { return 1.0 - smooth_step(2.0 * x - 1.0); }

inline TestFunction polynomial_probe(int n, ProbePoly p, double support) {
  TestFunction f;
  f.n = n;
  f.support = support;
  f.value = [n, p, support](const std::vector<double>& s) {
    double c = 1.0;
    for (int i = 0; i < n; ++i) c *= cutoff(s[i] / support);
    if (c == 0.0) return cplx(0.0);
    cplx v = 0.0;
    for (const auto& [e, a] : p) {
      double m = 1.0;
      for (int i = 0; i < n; ++i) m *= std::pow(s[i], e[i]);
      v += a * m;
    }
    return c * v;
  };
  f.jet = [n, p, support](unsigned b, const MultiIndex& k, const std::vector<double>& s) {
    double c = 1.0;
    for (int i = 0; i < n; ++i)
      if (!(b & (1u << i))) c *= cutoff(s[i] / support);
    if (c == 0.0) return cplx(0.0);
    cplx v = 0.0;
    for (const auto& [e, a] : p) {
      bool match = true;
      double m = 1.0;
      for (int i = 0; i < n && match; ++i) {
        if (b & (1u << i))
          match = e[i] == k[i];
        else
          m *= std::pow(s[i], e[i]);
      }
      if (match) v += a * m;
    }
    return c * v;
  };
  return f;
}

// P(s) exp(-sum s_i / scale): analytic, so its oscillatory pairings decay as
// clean power laws.  Support is cut at 40 scales.
inline TestFunction exponential_probe(int n, ProbePoly p, double scale) {
  TestFunction f;
  f.n = n;
  f.support = 40.0 * scale;
  f.value = [n, p, scale](const std::vector<double>& s) {
    double e = 0.0;
    for (int i = 0; i < n; ++i) e += s[i];
    cplx v = 0.0;
    for (const auto& [k, a] : p) {
      double m = 1.0;
      for (int i = 0; i < n; ++i) m *= std::pow(s[i], k[i]);
      v += a * m;
    }
    return v * std::exp(-e / scale);
  };
  f.jet = [n, p, scale](unsigned b, const MultiIndex& k, const std::vector<double>& s) {
    cplx v = 0.0;
    for (const auto& [e, a] : p) {
      double m = 1.0;
      for (int i = 0; i < n && m != 0.0; ++i) {
        if (b & (1u << i)) {
          if (e[i] > k[i])
            m = 0.0;
          else
            m *= std::pow(-1.0 / scale, k[i] - e[i]) / factorial(k[i] - e[i]);
        } else {
          m *= std::pow(s[i], e[i]) * std::exp(-s[i] / scale);
        }
      }
      v += a * m;
    }
    return v;
  };
  return f;
}

// Random complex polynomial of total degree in [lo, hi].
inline ProbePoly random_poly(int n, std::mt19937& rng, int lo, int hi) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ProbePoly p;
  std::function<void(int, MultiIndex&, int)> rec = [&](int i, MultiIndex& e, int deg) {
    if (i == n) {
      if (deg >= lo) p[e] = {u(rng), u(rng)};
      return;
    }
    for (int k = 0; deg + k <= hi; ++k) {
      e[i] = k;
      rec(i + 1, e, deg + k);
    }
  };
  MultiIndex e(n, 0);
  rec(0, e, 0);
  return p;
}

inline TestFunction random_probe(int n, std::mt19937& rng, int min_order, int max_degree, double support) {
  return polynomial_probe(n, random_poly(n, rng, min_order, max_degree), support);
}

// s^k w(s), the windowed monomial.
inline TestFunction monomial_probe(const MultiIndex& k, const Window& xi) {
  const int n = static_cast<int>(k.size());
  TestFunction f;
  f.n = n;
  f.support = xi.edge;
  f.value = [k, xi, n](const std::vector<double>& s) {
    double v = 1.0;
    for (int i = 0; i < n; ++i) v *= std::pow(s[i], k[i]) * xi(s[i]);
    return cplx(v);
  };
  f.jet = [k, xi, n](unsigned b, const MultiIndex& m, const std::vector<double>& s) {
    double v = 1.0;
    for (int i = 0; i < n; ++i) {
      if (b & (1u << i)) {
        if (m[i] != k[i]) return cplx(0.0);
      } else {
        v *= std::pow(s[i], k[i]) * xi(s[i]);
      }
    }
    return cplx(v);
  };
  return f;
}

// Psi(s / (1 + t s)) for a one-variable polynomial probe: the pullback under
// the shift tau -> tau + t of the delay.  Jets by series composition.
inline TestFunction shifted_probe(const ProbePoly& p, double support, double t, int jet_degree = 8) {
  if (t < 0.0) throw Error("shifted_probe: t must be nonnegative");
  TestFunction base = polynomial_probe(1, p, support);
  TestFunction f;
  f.n = 1;
  f.support = support * t < 1.0 ? support / (1.0 - support * t) : 1e300;
  f.value = [base, t](const std::vector<double>& s) { return base({s[0] / (1.0 + t * s[0])}); };
  // phi(s) = sum_{j>=1} (-t)^{j-1} s^j; powers phi^e truncated at jet_degree.
  std::vector<double> phi(jet_degree + 1, 0.0);
  for (int j = 1; j <= jet_degree; ++j) phi[j] = std::pow(-t, j - 1);
  std::vector<cplx> series(jet_degree + 1, 0.0);
  for (const auto& [e, a] : p) {
    std::vector<double> pw(jet_degree + 1, 0.0);
    pw[0] = 1.0;
    for (int r = 0; r < e[0]; ++r) {
      std::vector<double> nx(jet_degree + 1, 0.0);
      for (int i = 0; i <= jet_degree; ++i)
        for (int j = 0; i + j <= jet_degree; ++j) nx[i + j] += pw[i] * phi[j];
      pw = nx;
    }
    for (int i = 0; i <= jet_degree; ++i) series[i] += a * pw[i];
  }
  f.jet = [series, base, jet_degree](unsigned b, const MultiIndex& k, const std::vector<double>& s) {
    if (!(b & 1u)) return base({s[0]});
    if (k[0] > jet_degree) throw Error("shifted_probe: jet degree exceeded");
    return series[k[0]];
  };
  return f;
}

// ---------------------------------------------------------------------------
// s-space amplitude: Uhat(s) = A(1/s) prod 1/s_i^2.

struct SAmplitude {
  TauFunction tf;
  std::vector<int> ids;      // tree-line id of every delay slot (-1: clock)
  std::vector<int> free;     // slots integrated over, in variable order
  std::vector<double> base;  // values of all slots
  int clock = -1;

  int n() const { return static_cast<int>(free.size()); }

  cplx at_tau(const std::vector<double>& tau) const {
    std::vector<double> v = base;
    for (int i = 0; i < n(); ++i) v[free[i]] = tau[i];
    return tf(v);
  }
  cplx operator()(const std::vector<double>& s) const {
    std::vector<double> v = base;
    double jac = 1.0;
    for (int i = 0; i < n(); ++i) {
      v[free[i]] = 1.0 / s[i];
      jac /= s[i] * s[i];
    }
    return jac * tf(v);
  }

  SAmplitude with_clock(double t) const {
    if (clock < 0) throw Error("SAmplitude: no clock slot");
    SAmplitude a = *this;
    a.base[clock] = t;
    return a;
  }
  // Fixes variable i at delay tau.
  SAmplitude fixed(int i, double tau) const {
    SAmplitude a = *this;
    a.base[free[i]] = tau;
    a.free.erase(a.free.begin() + i);
    return a;
  }
  // Variable index of tree line `id`.
  int variable(int id) const {
    for (int i = 0; i < n(); ++i)
      if (ids[free[i]] == id) return i;
    throw Error("SAmplitude: line is not a variable");
  }
};

struct AmplitudeOptions {
  bool clock = false;
  std::vector<int> translate;  // positions among the diagram's external lines
  double shift = 0.0;
};

inline SAmplitude s_amplitude(const FriedrichsDiagram& g, const ContinuumSetup& cs, const AmplitudeOptions& o = {}) {
  GaussianIntegrand f = integrand(g, cs, o.clock);
  if (!o.translate.empty() && o.shift != 0.0) {
    // Spatial translation of the chosen legs: the phase carries the line orientation.
    auto ext = f.external_indices();
    auto lines = g.external_lines();
    if (o.translate.size() >= ext.size()) throw Error("s_amplitude: translate a proper subset of the external lines");
    for (int k : o.translate) f = translate_phase(f, {ext.at(k)}, g.orientation(*lines.at(k)) * o.shift);
  }
  SAmplitude a;
  a.tf = integrate_momenta(f);
  a.ids = g.all_taus();
  a.base.assign(a.ids.size(), 0.0);
  for (std::size_t i = 0; i < a.ids.size(); ++i) {
    auto fx = g.fixed().find(a.ids[i]);
    if (fx != g.fixed().end())
      a.base[i] = fx->second;
    else
      a.free.push_back(static_cast<int>(i));
  }
  if (o.clock) {
    a.clock = static_cast<int>(a.ids.size());
    a.ids.push_back(-1);
    a.base.push_back(0.0);
  }
  return a;
}

// ---------------------------------------------------------------------------
// Nested adaptive quadrature over a box in log coordinates.

struct PairingResult {
  cplx value = 0.0;
  double error = 0.0;
};

struct QuadSettings {
  double tol = 1e-10;
  int depth = 12;
};

template <class F>
PairingResult integrate_box(F&& f, const std::vector<double>& lo, const std::vector<double>& hi,
                            const QuadSettings& q = {}) {
  const int n = static_cast<int>(lo.size());
  std::vector<double> s(n, 0.0);
  double err_acc = 0.0;
  std::function<cplx(int)> rec = [&](int k) -> cplx {
    if (k == n) return f(s);
    if (!(hi[k] > lo[k])) return 0.0;
    double err = 0.0;
    cplx v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        [&](double x) {
          s[k] = std::exp(x);
          return s[k] * rec(k + 1);
        },
        std::log(lo[k]), std::log(hi[k]), q.depth, q.tol, &err);
    if (k == 0) err_acc += err;
    return v;
  };
  cplx v = rec(0);
  if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) throw QuadratureError("integrate_box: non-finite result", err_acc);
  return {v, err_acc};
}

// ---------------------------------------------------------------------------
// Taylor subtraction.  T_B Psi = sum_{k_B <= N_B} jet_B(k) prod_{i in B} s_i^k xi(s_i).

inline cplx taylor_part(const TestFunction& psi, unsigned b, const std::vector<int>& deg, const Window& xi,
                        const std::vector<double>& s) {
  const int n = psi.n;
  double w = 1.0;
  for (int i = 0; i < n; ++i)
    if (b & (1u << i)) {
      w *= xi(s[i]);
      if (w == 0.0) return 0.0;
    }
  cplx total = 0.0;
  MultiIndex k(n, 0);
  std::function<void(int, double)> rec = [&](int i, double mono) {
    if (i == n) {
      total += psi.jet(b, k, s) * mono;
      return;
    }
    if (!(b & (1u << i))) {
      rec(i + 1, mono);
      return;
    }
    double p = 1.0;
    for (int m = 0; m <= deg[i]; ++m) {
      k[i] = m;
      rec(i + 1, mono * p);
      p *= s[i];
    }
    k[i] = 0;
  };
  rec(0, w);
  return total;
}

// prod_i (1 - T_i) Psi.
inline cplx subtracted(const TestFunction& psi, const std::vector<int>& deg, const Window& xi,
                       const std::vector<double>& s) {
  const unsigned all = (1u << psi.n) - 1;
  cplx v = 0.0;
  for (unsigned b = 0; b <= all; ++b) {
    cplx t = b == 0 ? psi(s) : taylor_part(psi, b, deg, xi, s);
    v += (std::popcount(b) % 2 ? -1.0 : 1.0) * t;
  }
  return v;
}

// ---------------------------------------------------------------------------

struct MomentFunctional {
  int n = 0;
  std::map<MultiIndex, cplx> coef;  // Psi -> sum c_m d^m Psi(0)

  int degree() const {
    int d = -1;
    for (const auto& [m, c] : coef) {
      int t = 0;
      for (int x : m) t += x;
      d = std::max(d, t);
    }
    return d;
  }
  cplx apply(const TestFunction& psi) const {
    cplx v = 0.0;
    for (const auto& [m, c] : coef) {
      double f = 1.0;
      for (int x : m) f *= factorial(x);
      v += c * f * psi.coefficient(m);
    }
    return v;
  }
  MomentFunctional conjugate() const {
    MomentFunctional o = *this;
    for (auto& [m, c] : o.coef) c = std::conj(c);
    return o;
  }
};

inline nlohmann::json to_json(const MomentFunctional& m) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& [k, c] : m.coef) terms.push_back({{"m", k}, {"c", {c.real(), c.imag()}}});
  return {{"variables", m.n}, {"degree", m.degree()}, {"moments", terms}};
}

inline std::vector<MultiIndex> multi_indices(const std::vector<int>& deg) {
  std::vector<MultiIndex> out;
  MultiIndex k(deg.size(), 0);
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == deg.size()) {
      out.push_back(k);
      return;
    }
    for (int m = 0; m <= deg[i]; ++m) {
      k[i] = m;
      rec(i + 1);
    }
  };
  rec(0);
  return out;
}

struct RenormSettings {
  double window = 50.0;  // s_i >= 1/window
  int cap = 4;           // maximal subtraction degree per variable
  Window xi = window_for(2);
  QuadSettings quad{};
};

inline std::vector<double> lower_box(int n, double T) { return std::vector<double>(n, 1.0 / T); }

inline std::vector<double> upper_box(int n, double probe_support, const Window& xi) {
  return std::vector<double>(n, std::max(probe_support, xi.edge));
}

// <Uhat, Psi> over s_i in [1/T, support].
inline PairingResult pairing(const SAmplitude& a, const TestFunction& psi, const RenormSettings& rs) {
  return integrate_box([&](const std::vector<double>& s) { return a(s) * psi(s); }, lower_box(a.n(), rs.window),
                       upper_box(a.n(), psi.support, rs.xi), rs.quad);
}

// <Uhat, prod (1 - T_i) Psi>: the renormalized pairing.
inline PairingResult renormalized(const SAmplitude& a, const TestFunction& psi, const std::vector<int>& deg,
                                  const RenormSettings& rs) {
  return integrate_box([&](const std::vector<double>& s) { return a(s) * subtracted(psi, deg, rs.xi, s); },
                       lower_box(a.n(), rs.window), upper_box(a.n(), psi.support, rs.xi), rs.quad);
}

// <R'hat, Psi>: everything but the top-level counterterm,
// Uhat [prod (1 - T_i) - (-1)^n T_all] Psi.
inline PairingResult reduced_pairing(const SAmplitude& a, const TestFunction& psi, const std::vector<int>& deg,
                                     const RenormSettings& rs) {
  const unsigned all = (1u << a.n()) - 1;
  const double sign = a.n() % 2 ? -1.0 : 1.0;
  return integrate_box(
      [&](const std::vector<double>& s) {
        return a(s) * (subtracted(psi, deg, rs.xi, s) - sign * taylor_part(psi, all, deg, rs.xi, s));
      },
      lower_box(a.n(), rs.window), upper_box(a.n(), psi.support, rs.xi), rs.quad);
}

// Divergence degree per variable from the rank of the phase form: A decays
// like tau_i^{-d rank / 2}, so Uhat ~ s_i^{d rank / 2 - 2} and the moment
// integral of order m diverges when m <= 1 - d rank / 2.
inline std::vector<double> divergence_degree(const SAmplitude& a) {
  std::vector<double> w;
  const int d = a.tf.dimension();
  for (int i = 0; i < a.n(); ++i) {
    int rank = 1 << 20;
    for (const auto& t : a.tf.terms()) {
      if (t.prefactor == cplx(0.0)) continue;
      const MatR& b = t.b[a.free[i]];
      int r = 0;
      if (b.size() > 0) {
        Eigen::SelfAdjointEigenSolver<MatR> es(0.5 * (b + b.transpose()));
        const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
        for (int k = 0; k < es.eigenvalues().size(); ++k)
          if (std::abs(es.eigenvalues()[k]) > 1e-10 * scale) ++r;
      }
      rank = std::min(rank, r);
    }
    if (rank == (1 << 20)) rank = 0;
    w.push_back(1.0 - 0.5 * d * rank);
  }
  return w;
}

// Slope fit of log|Uhat| along variable i near 0 (others at `rest`),
// reported as a divergence degree for comparison with the rank count.
inline double fitted_degree(const SAmplitude& a, int i, double rest = 0.05) {
  std::vector<double> x, y;
  for (double s : {1e-5, 3e-5, 1e-4, 3e-4, 1e-3}) {
    std::vector<double> v(a.n(), rest);
    v[i] = s;
    double m = std::abs(a(v));
    if (m == 0.0) return -1e300;
    x.push_back(std::log(s));
    y.push_back(std::log(m));
  }
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < x.size(); ++k) mx += x[k] / x.size(), my += y[k] / y.size();
  double sxy = 0, sxx = 0;
  for (std::size_t k = 0; k < x.size(); ++k) sxy += (x[k] - mx) * (y[k] - my), sxx += (x[k] - mx) * (x[k] - mx);
  return -1.0 - sxy / sxx;
}

inline std::vector<int> subtraction_degree(const std::vector<double>& omega, int cap) {
  std::vector<int> n;
  for (double w : omega) n.push_back(std::min(cap, std::max(0, static_cast<int>(std::ceil(w - 1e-9))) + 1));
  return n;
}

struct Counterterm {
  MomentFunctional c;
  std::vector<int> degree;
  double error = 0.0;
};

// Top-level counterterm: coefficients fixed by <R'hat + Chat, s^k w> = 0 on
// the windowed monomials, i.e. c_k = -<R'hat, s^k w> / k!.
inline Counterterm subtract(const SAmplitude& a, const std::vector<int>& deg, const RenormSettings& rs) {
  Counterterm ct;
  ct.degree = deg;
  ct.c.n = a.n();
  for (const auto& k : multi_indices(deg)) {
    TestFunction probe = monomial_probe(k, rs.xi);
    PairingResult r = reduced_pairing(a, probe, deg, rs);
    double f = 1.0;
    for (int x : k) f *= factorial(x);
    ct.c.coef[k] = -r.value / f;
    ct.error = std::max(ct.error, r.error / f);
  }
  return ct;
}

// Counterterm of a diagram outside the renormalizable class: the whole
// pairing is projected out, c_k = -<Uhat, s^k w> / k!.
inline Counterterm simple_subtract(const SAmplitude& a, const std::vector<int>& deg, const RenormSettings& rs) {
  Counterterm ct;
  ct.degree = deg;
  ct.c.n = a.n();
  for (const auto& k : multi_indices(deg)) {
    PairingResult r = pairing(a, monomial_probe(k, rs.xi), rs);
    double f = 1.0;
    for (int x : k) f *= factorial(x);
    ct.c.coef[k] = -r.value / f;
    ct.error = std::max(ct.error, r.error / f);
  }
  return ct;
}

// ---------------------------------------------------------------------------
// Sector decomposition: sum over A of int dlambda lambda^{n-1} int du
// eta_A(lambda u) delta_1(|u| - 1) F(lambda u), polar coordinates in u.

struct SectorResult {
  cplx total = 0.0;
  std::vector<cplx> sector;
  std::vector<double> error;
};

inline SectorResult sector_pairing(const std::function<cplx(const std::vector<double>&)>& f, int n, double support,
                                   const Window& xi, double lambda_min = 1e-8, const QuadSettings& q = {}) {
  if (n < 1 || n > 2) throw Error("sector_pairing: implemented for one and two delays");
  SectorResult out;
  const double lmax = support * (n == 1 ? 1.0 / 0.9 : std::sqrt(2.0) / 0.9);
  for (unsigned a = 0; a < (1u << n); ++a) {
    auto g = [&](const std::vector<double>& s) { return eta(a, s, xi) * f(s); };
    PairingResult r;
    if (n == 1) {
      r = integrate_box(
          [&](const std::vector<double>& v) {
            const double lambda = v[0], u = v[1];
            return u * bump_psi(u - 1.0) * g({lambda * u});
          },
          {lambda_min, 0.9}, {lmax, 1.1}, q);
    } else {
      // u = r (cos th, sin th); du = r dr dth, delta_1 = r psi(r - 1).
      std::vector<double> lo{lambda_min, 0.9}, hi{lmax, 1.1};
      double err = 0.0;
      cplx v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
          [&](double th) {
            return integrate_box(
                       [&](const std::vector<double>& w) {
                         const double lambda = w[0], r = w[1];
                         return lambda * r * r * bump_psi(r - 1.0) *
                                g({lambda * r * std::cos(th), lambda * r * std::sin(th)});
                       },
                       lo, hi, q)
                .value;
          },
          0.0, 0.5 * M_PI, q.depth, q.tol, &err);
      r = {v, err};
    }
    out.sector.push_back(r.value);
    out.error.push_back(r.error);
    out.total += r.value;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Counterterm inserted into a larger diagram: the sub-counterterm of the
// variables in `inner` is computed at every value of the remaining (outer)
// delay and paired with the Taylor jets of Psi in the inner variables.
// Two-variable amplitudes: one inner and one outer variable.

inline PairingResult star_insert(const SAmplitude& a, int inner, const std::vector<int>& deg, const TestFunction& psi,
                                 const RenormSettings& rs) {
  if (a.n() != 2) throw Error("star_insert: two-variable amplitude expected");
  const int outer = 1 - inner;
  const double hi = std::max(psi.support, rs.xi.edge);
  auto f = [&](const std::vector<double>& so) {
    SAmplitude sub = a.fixed(outer, 1.0 / so[0]);
    Counterterm ct = subtract(sub, {deg[inner]}, rs);
    cplx v = 0.0;
    std::vector<double> s(2, 0.0);
    s[outer] = so[0];
    for (const auto& [k, c] : ct.c.coef) {
      MultiIndex kk(2, 0);
      kk[inner] = k[0];
      v += c * factorial(k[0]) * psi.jet(1u << inner, kk, s);
    }
    return v / (so[0] * so[0]);
  };
  return integrate_box(f, {1.0 / rs.window}, {hi}, rs.quad);
}

// The same piece evaluated directly: -(<Uhat, T_inner Psi>).
inline PairingResult inner_counterterm_direct(const SAmplitude& a, int inner, const std::vector<int>& deg,
                                              const TestFunction& psi, const RenormSettings& rs) {
  PairingResult r = integrate_box(
      [&](const std::vector<double>& s) { return a(s) * taylor_part(psi, 1u << inner, deg, rs.xi, s); },
      lower_box(2, rs.window), upper_box(2, psi.support, rs.xi), rs.quad);
  r.value = -r.value;
  return r;
}

// ---------------------------------------------------------------------------
// Time translation of one-delay amplitudes.  f_t = e^{iAt} f shifts the root
// delay, and the renormalized functional
//   g[f](Psi) = <Uhat[f], Psi - T Psi> + sum_m kappa_m[f] Psi^(m)(0)/m!
// is invariant, g[f_t](Psi(s/(1+ts))) = g[f](Psi), when
//   kappa' = d(t) + M kappa,  M_{m,m+1} = m,  kappa(0) = 0,
//   d_m(t) = <Uhat[f_t], s^{m+2} xi' + N delta_{mN} s^{N+1} xi>.

inline std::vector<cplx> generator_source(const SAmplitude& a, int deg, const RenormSettings& rs) {
  std::vector<cplx> d(deg + 1);
  for (int m = 0; m <= deg; ++m) {
    auto phi = [&](double s) {
      double v = std::pow(s, m + 2) * rs.xi.derivative(s);
      if (m == deg) v += deg * std::pow(s, deg + 1) * rs.xi(s);
      return v;
    };
    d[m] = integrate_box([&](const std::vector<double>& s) { return a(s) * phi(s[0]); }, {1.0 / rs.window},
                         {rs.xi.edge}, rs.quad)
               .value;
  }
  return d;
}

inline std::vector<cplx> invariant_extension(const SAmplitude& a, int deg, double t, const RenormSettings& rs) {
  if (a.n() != 1) throw Error("invariant_extension: one-delay amplitudes only");
  // exp(M s) for the nilpotent M.
  auto expm = [deg](double s) {
    MatR m = MatR::Zero(deg + 1, deg + 1);
    for (int i = 0; i < deg; ++i) m(i, i + 1) = i;
    MatR e = MatR::Identity(deg + 1, deg + 1), p = MatR::Identity(deg + 1, deg + 1);
    for (int k = 1; k <= deg + 1; ++k) {
      p = p * m * (s / k);
      e += p;
    }
    return e;
  };
  std::vector<cplx> kappa(deg + 1, 0.0);
  if (t == 0.0) return kappa;
  const Rule& rule = gauss_rule();
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    const double u = t * rule.nodes[q];
    std::vector<cplx> d = generator_source(a.with_clock(u), deg, rs);
    MatR e = expm(t - u);
    for (int i = 0; i <= deg; ++i)
      for (int j = 0; j <= deg; ++j) kappa[i] += t * rule.weights[q] * e(i, j) * d[j];
  }
  return kappa;
}

inline cplx extended_pairing(const SAmplitude& a, const TestFunction& psi, int deg, const std::vector<cplx>& kappa,
                             const RenormSettings& rs) {
  cplx v = renormalized(a, psi, {deg}, rs).value;
  for (int m = 0; m <= deg; ++m) v += kappa[m] * psi.coefficient({m});
  return v;
}

// Order-2 chain with both vertices on the minus branch and `k` lines from
// annihilators of the upper vertex to creators of the lower one.
inline FriedrichsDiagram exchange_chain(int k, bool thermal = false) {
  for (const auto& g : enumerate_diagrams(DirectedTree::from_parents({0, 1}), {thermal})) {
    if (g.branches()[0] != Branch::Minus || g.branches()[1] != Branch::Minus) continue;
    int inner = 0;
    bool shape = true;
    for (const auto& l : g.lines())
      if (!l.external()) {
        ++inner;
        shape = shape && l.upper.slot >= 2 && l.lower.slot < 2;
      }
    if (inner == k && shape) return g;
  }
  throw Error("exchange_chain: no such diagram");
}

inline FriedrichsDiagram single_exchange_chain(bool thermal = false) { return exchange_chain(1, thermal); }

// ---------------------------------------------------------------------------
// Cluster decay: |pairing(a)| ~ a^{-p}.

struct DecayFit {
  double exponent = 0.0;
  double residual = 0.0;       // rms of log(measured / fit)
  double max_deviation = 0.0;  // max |measured / fit - 1|
  bool monotone = true;
  std::vector<double> a, magnitude;
};

inline DecayFit fit_decay(const std::vector<double>& a, const std::vector<double>& mag) {
  if (a.size() < 2 || a.size() != mag.size()) throw Error("fit_decay: need matching samples, at least two");
  DecayFit f;
  f.a = a;
  f.magnitude = mag;
  const double n = static_cast<double>(a.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(mag[i] > 0.0)) throw Error("fit_decay: magnitudes must be positive");
    mx += std::log(a[i]) / n, my += std::log(mag[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sxy += (std::log(a[i]) - mx) * (std::log(mag[i]) - my);
    sxx += (std::log(a[i]) - mx) * (std::log(a[i]) - mx);
  }
  const double slope = sxy / sxx;
  f.exponent = -slope;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double r = std::log(mag[i]) - (my + slope * (std::log(a[i]) - mx));
    ss += r * r;
    f.max_deviation = std::max(f.max_deviation, std::abs(std::exp(r) - 1.0));
    if (i > 0 && !(mag[i] < mag[i - 1])) f.monotone = false;
  }
  f.residual = std::sqrt(ss / n);
  return f;
}

// Renormalized pairing with the legs in `subset` translated by each a.
inline DecayFit cluster_decay(const FriedrichsDiagram& g, const ContinuumSetup& cs, const std::vector<int>& subset,
                              const std::vector<double>& as, const TestFunction& psi, const std::vector<int>& deg,
                              const RenormSettings& rs) {
  if (subset.empty()) throw Error("cluster_decay: subset must be nonempty");
  std::vector<double> mag = parallel_map<double>(as.size(), [&](std::size_t i) {
    AmplitudeOptions o;
    o.translate = subset;
    o.shift = as[i];
    return std::abs(renormalized(s_amplitude(g, cs, o), psi, deg, rs).value);
  });
  return fit_decay(as, mag);
}

// ---------------------------------------------------------------------------
// Counterterm table over all diagrams through a given order.

struct TableEntry {
  std::string id;
  int order = 0;
  bool connected = true;
  bool structural_zero = false;
  bool simply_subtracted = false;  // a tree line crossed by fewer than 3 lines
  std::vector<double> omega;
  std::vector<double> omega_fit;
  Counterterm counterterm;
  nlohmann::json diagram;
};

// Every tree line is crossed by at least three lines.
inline bool renormalizable(const FriedrichsDiagram& g) {
  for (const auto& tl : g.tree().lines()) {
    int c = 0;
    for (const auto& l : g.lines())
      if (std::find(l.path.begin(), l.path.end(), tl.id) != l.path.end()) ++c;
    if (c < 3) return false;
  }
  return true;
}

class CountertermTable {
 public:
  std::map<std::string, TableEntry>& entries() { return entries_; }
  const std::map<std::string, TableEntry>& entries() const { return entries_; }
  const TableEntry& at(const std::string& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw Error("CountertermTable: no entry " + id);
    return it->second;
  }
  bool contains(const std::string& id) const { return entries_.count(id) > 0; }
  void add(TableEntry e) { entries_[e.id] = std::move(e); }

 private:
  std::map<std::string, TableEntry> entries_;
};

inline TableEntry table_entry(const FriedrichsDiagram& g, const ContinuumSetup& cs, const RenormSettings& rs) {
  TableEntry e;
  e.id = g.id();
  e.order = g.tree().vertex_count();
  e.connected = g.tree().connected();
  e.diagram = to_json(g);
  SAmplitude a = s_amplitude(g, cs);
  if (a.tf.structural_zero) {
    e.structural_zero = true;
    return e;
  }
  e.omega = divergence_degree(a);
  for (int i = 0; i < a.n(); ++i) e.omega_fit.push_back(fitted_degree(a, i));
  const auto deg = subtraction_degree(e.omega, rs.cap);
  if (!renormalizable(g)) {
    e.simply_subtracted = true;
    e.counterterm = simple_subtract(a, deg, rs);
    return e;
  }
  e.counterterm = subtract(a, deg, rs);
  return e;
}

// Bottom-up by tree-line count.  Entries of one order depend only on lower
// orders through the reduced pairing, which for the product subtraction
// scheme is explicit in the Taylor operators.
inline CountertermTable counterterm_recursion(int max_order, const ContinuumSetup& cs, const RenormSettings& rs,
                                              bool thermal, const std::function<void(const TableEntry&)>& progress = {}) {
  if (max_order < 0 || max_order > 3) throw Error("counterterm_recursion: order must be in 0..3");
  CountertermTable table;
  for (int n = 1; n <= max_order; ++n) {
    std::vector<FriedrichsDiagram> stage;
    for (const auto& t : enumerate_trees(n))
      for (auto& g : enumerate_diagrams(t, {thermal})) stage.push_back(std::move(g));
    auto done = parallel_map<TableEntry>(stage.size(), [&](std::size_t i) { return table_entry(stage[i], cs, rs); });
    for (auto& e : done) {
      if (progress) progress(e);
      table.add(std::move(e));
    }
  }
  return table;
}

inline nlohmann::json to_json(const TableEntry& e) {
  return {{"id", e.id},
          {"order", e.order},
          {"connected", e.connected},
          {"structural_zero", e.structural_zero},
          {"simply_subtracted", e.simply_subtracted},
          {"omega", e.omega},
          {"omega_fit", e.omega_fit},
          {"degree", e.counterterm.degree},
          {"counterterm", to_json(e.counterterm.c)},
          {"quadrature_error", e.counterterm.error},
          {"diagram", e.diagram}};
}

inline nlohmann::json to_json(const CountertermTable& t) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& [id, e] : t.entries()) a.push_back(to_json(e));
  return {{"entries", a}};
}

// ---------------------------------------------------------------------------
// Grid level, first order.  On the cyclic vector U(t, -T) at first order is
//   sum_m c_m (e^{i w t} - e^{-i w T}) / (i w) :m:,  w = -Phi(m),
// with c_m the coefficients of L_int on the cyclic vector (resonant terms:
// c_m (t + T)).  The counterterm vector removes the window edge.

inline NormalPolynomial first_order_window(const WickContext& w, const NormalPolynomial& lint, double t, double T) {
  NormalPolynomial out;
  for (const auto& [m, c] : lint.terms()) {
    const double om = -phase_rate(w.grid(), m);
    if (std::abs(om) <= 1e-12)
      out.add(m, c * (t + T));
    else
      out.add(m, c * (std::exp(I * (om * t)) - std::exp(-I * (om * T))) / (I * om));
  }
  return out;
}

inline NormalPolynomial assemble_lambda(const WickContext& w, const NormalPolynomial& lint, int order, double T) {
  if (order < 0) throw Error("assemble_lambda: negative order");
  if (order > 1) throw Error("assemble_lambda: grid counterterms are assembled through first order only");
  NormalPolynomial out;
  if (order == 0) return out;
  for (const auto& [m, c] : lint.terms()) {
    const double om = -phase_rate(w.grid(), m);
    if (std::abs(om) <= 1e-12)
      out.add(m, -c * T);
    else
      out.add(m, c * std::exp(-I * (om * T)) / (I * om));
  }
  return out;
}

// (R_Lambda U)(t, -infinity) on the cyclic vector through first order.
inline NormalPolynomial renormalized_state(const WickContext& w, const NormalPolynomial& lint, double t, double T) {
  return NormalPolynomial::constant(1.0) + first_order_window(w, lint, t, T) + assemble_lambda(w, lint, 1, T);
}

}  // namespace nert
