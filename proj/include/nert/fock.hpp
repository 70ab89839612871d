#pragma once

// Exact finite-dimensional realization of the doubled algebra on the space of
// density arrays.  Minus-branch generators act by left multiplication,
// plus-branch generators by right multiplication:
//   a_-(k) X = a(k) X,   a+_-(k) X = a+(k) X,
//   a_+(k) X = X a+(k),  a+_+(k) X = X a(k).
// The cyclic vector is the reference density array and the pairing is the
// trace.  Internally all ladder operators are unit normalized; the weighted
// operators of the continuum normalization carry an extra 1/sqrt(weight).

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <functional>
#include <vector>

#include "nert/modespace.hpp"
#include "nert/quadrature.hpp"

namespace nert {

using Mat = Eigen::MatrixXcd;

class DoubledRep {
 public:
  static constexpr std::size_t default_budget = 400 * 400;

  DoubledRep(ModeGrid grid, int n_max, std::size_t budget = default_budget) : grid_(std::move(grid)), n_max_(n_max) {
    if (n_max < 1) throw Error("represent: n_max must be >= 1");
    const std::size_t modes = grid_.size();
    double d = std::pow(static_cast<double>(n_max + 1), static_cast<double>(modes));
    if (d * d > static_cast<double>(budget))
      throw CapacityError("represent: dim^2 = " + std::to_string(d * d) + " exceeds budget " + std::to_string(budget));
    dim_ = static_cast<int>(d);
    occ_.assign(dim_, std::vector<int>(modes, 0));
    for (int s = 0; s < dim_; ++s) {
      int r = s;
      for (std::size_t m = 0; m < modes; ++m) {
        occ_[s][m] = r % (n_max + 1);
        r /= (n_max + 1);
      }
    }
    lower_.reserve(modes);
    for (std::size_t m = 0; m < modes; ++m) {
      Mat a = Mat::Zero(dim_, dim_);
      int stride = 1;
      for (std::size_t j = 0; j < m; ++j) stride *= (n_max + 1);
      for (int s = 0; s < dim_; ++s) {
        int n = occ_[s][m];
        if (n > 0) a(s - stride, s) = std::sqrt(static_cast<double>(n));
      }
      lower_.push_back(std::move(a));
      stride_.push_back(stride);
    }
  }

  const ModeGrid& grid() const { return grid_; }
  int n_max() const { return n_max_; }
  int dim() const { return dim_; }
  std::size_t modes() const { return grid_.size(); }
  int occupation(int state, int mode) const { return occ_[state][mode]; }
  int total_occupation(int state) const {
    int t = 0;
    for (int v : occ_[state]) t += v;
    return t;
  }

  // Unit-normalized a(k).
  const Mat& lowering(int mode) const { return lower_[mode]; }

  // Action of a generator on an array, unit normalized.  The ladder arrays
  // have one nonzero diagonal, so the action is a scaled row or column shift.
  Mat apply(const Generator& g, const Mat& x) const {
    Mat y = Mat::Zero(x.rows(), x.cols());
    const int m = g.mode;
    const int stride = stride_[m];
    for (int s = 0; s < dim_; ++s) {
      const int n = occ_[s][m];
      if (n == 0) continue;
      const double r = std::sqrt(static_cast<double>(n));
      if (g.branch == Branch::Minus) {
        if (g.dagger)
          y.row(s) = r * x.row(s - stride);
        else
          y.row(s - stride) = r * x.row(s);
      } else {
        if (g.dagger)
          y.col(s) = r * x.col(s - stride);
        else
          y.col(s - stride) = r * x.col(s);
      }
    }
    return y;
  }

  // Same, in the weighted normalization [a(k), a+(k')] = delta_{kk'} / weight.
  Mat apply_weighted(const Generator& g, const Mat& x) const { return apply(g, x) / std::sqrt(grid_.weight(g.mode)); }

  // Grid basis states with every occupation strictly below n_max.
  bool has_headroom(int state) const {
    for (int v : occ_[state])
      if (v >= n_max_) return false;
    return true;
  }

 private:
  ModeGrid grid_;
  int n_max_;
  int dim_ = 0;
  std::vector<std::vector<int>> occ_;
  std::vector<Mat> lower_;
  std::vector<int> stride_;
};

inline DoubledRep represent(const ModeGrid& grid, int n_max, std::size_t budget = DoubledRep::default_budget) {
  return DoubledRep(grid, n_max, budget);
}

// Reference state: vacuum projector, or the normalized product of truncated
// thermal factors reproducing n(k) mode by mode.
inline Mat reference_state(const DoubledRep& rep, const OccupationField& n) {
  Mat rho = Mat::Zero(rep.dim(), rep.dim());
  double z = 0.0;
  for (int s = 0; s < rep.dim(); ++s) {
    double w = 1.0;
    for (std::size_t m = 0; m < rep.modes(); ++m) {
      int k = rep.occupation(s, static_cast<int>(m));
      double nk = n[static_cast<int>(m)];
      if (nk == 0.0) {
        if (k > 0) w = 0.0;
      } else {
        w *= std::pow(nk / (1.0 + nk), k);
      }
    }
    rho(s, s) = w;
    z += w;
  }
  return rho / z;
}

inline cplx pairing_trace(const Mat& x) { return x.trace(); }

// rho0'(g1 g2) in the weighted normalization: trace of g1 g2 applied to the
// reference state.
inline cplx two_point(const DoubledRep& rep, const Mat& state, const Generator& g1, const Generator& g2) {
  const double w = std::sqrt(rep.grid().weight(g1.mode) * rep.grid().weight(g2.mode));
  return rep.apply(g1, rep.apply(g2, state)).trace() / w;
}

// ---------------------------------------------------------------------------

class LiouvillePair {
 public:
  LiouvillePair(const DoubledRep& rep, const InteractionKernel& kernel, double lambda)
      : rep_(&rep), kernel_(kernel), lambda_(lambda) {
    const int d = rep.dim();
    const ModeGrid& g = rep.grid();
    h0_ = Mat::Zero(d, d);
    energies_.resize(d);
    for (int s = 0; s < d; ++s) {
      double e = 0.0;
      for (std::size_t m = 0; m < rep.modes(); ++m) e += g.energy(static_cast<int>(m)) * rep.occupation(s, static_cast<int>(m));
      energies_[s] = e;
      h0_(s, s) = e;
    }
    v_ = assemble_interaction(rep, kernel);
  }

  // V = sum w v(p1,p2|q1,q2) delta_K(p1+p2-q1-q2) a+(p1) a+(p2) a(q1) a(q2)
  // in unit-normalized ladder operators.
  static Mat assemble_interaction(const DoubledRep& rep, const InteractionKernel& kernel) {
    const ModeGrid& g = rep.grid();
    const int m = static_cast<int>(g.size());
    Mat v = Mat::Zero(rep.dim(), rep.dim());
    for (int p1 = 0; p1 < m; ++p1)
      for (int p2 = 0; p2 < m; ++p2)
        for (int q1 = 0; q1 < m; ++q1) {
          auto q2 = g.conserve(p1, p2, q1);
          if (!q2) continue;
          cplx c = g.weight(p1) * kernel(g.momentum(p1), g.momentum(p2), g.momentum(q1), g.momentum(*q2));
          const Mat& a1 = rep.lowering(p1);
          const Mat& a2 = rep.lowering(p2);
          v += c * (a1.adjoint() * (a2.adjoint() * (rep.lowering(q1) * rep.lowering(*q2))));
        }
    return v;
  }

  const DoubledRep& rep() const { return *rep_; }
  double lambda() const { return lambda_; }
  const Mat& h0() const { return h0_; }
  const Mat& v() const { return v_; }
  const std::vector<double>& energies() const { return energies_; }

  Mat apply_l0(const Mat& x) const { return -I * (h0_ * x - x * h0_); }
  Mat apply_lint(const Mat& x) const { return -I * (v_ * x) + I * (x * v_.adjoint()); }

  // e^{L0 t} X, diagonal in the occupation basis.
  Mat free_evolve(const Mat& x, double t) const {
    Eigen::VectorXcd u(static_cast<Eigen::Index>(energies_.size()));
    for (std::size_t a = 0; a < energies_.size(); ++a) u[a] = std::exp(-I * (energies_[a] * t));
    return u.asDiagonal() * x * u.conjugate().asDiagonal();
  }

  // L_int(s) X = e^{-L0 s} L_int e^{L0 s} X.
  Mat apply_lint_at(double s, const Mat& x) const { return free_evolve(apply_lint(free_evolve(x, s)), -s); }

  // e^{L t} X with L = L0 + lambda L_int.  Analytic in lambda, so complex
  // couplings give the continuation used for coefficient extraction.
  Mat evolve_full(const Mat& x, double t, cplx lambda) const {
    Mat left = h0_ + lambda * v_;
    Mat right = h0_ + lambda * Mat(v_.adjoint());
    Mat u = Mat(-I * t * left).exp();
    Mat ud = Mat(I * t * right).exp();
    return u * x * ud;
  }

  // U(t2, t1) X = e^{-L0 t2} e^{L (t2 - t1)} e^{L0 t1} X.
  Mat interaction_evolve(const Mat& x, double t2, double t1, cplx lambda) const {
    return free_evolve(evolve_full(free_evolve(x, t1), t2 - t1, lambda), -t2);
  }

 private:
  const DoubledRep* rep_;
  InteractionKernel kernel_;
  double lambda_;
  Mat h0_, v_;
  std::vector<double> energies_;
};

inline LiouvillePair liouvillian(const DoubledRep& rep, const InteractionKernel& kernel, double lambda) {
  return LiouvillePair(rep, kernel, lambda);
}

// Star involution on arrays: the plus/minus swap realized as X -> X^dagger.
inline Mat star(const Mat& x) { return x.adjoint(); }

// ---------------------------------------------------------------------------

struct DysonResult {
  Mat value;
  double error = 0.0;
  int panels = 0;
};

namespace detail {

inline Mat nested_dyson(const LiouvillePair& pair, int order, double lo, double u, const Mat& x, double panel_width) {
  if (order == 0) return x;
  int panels = std::max(1, static_cast<int>(std::ceil((u - lo) / panel_width - 1e-12)));
  return composite(
      [&](double s) { return Mat(pair.apply_lint_at(s, nested_dyson(pair, order - 1, lo, s, x, panel_width))); }, lo,
      u, panels);
}

}  // namespace detail

// n-th coefficient in lambda of U(t2, t1) applied to X: the time-ordered
// integral over t1 < s_1 < ... < s_n < t2 of L_int(s_n) ... L_int(s_1) X.
// The panel width is halved until two successive results agree to `tol`.
inline DysonResult dyson_apply(const LiouvillePair& pair, int order, double t2, double t1, const Mat& x,
                               double tol = 1e-10, int max_panels = 64) {
  if (order < 0 || order > 3) throw Error("dyson_term: order must be in 0..3");
  if (t2 < t1) throw Error("dyson_term: requires t2 >= t1");
  if (order == 0) return {x, 0.0, 0};
  if (t2 == t1) return {Mat::Zero(x.rows(), x.cols()), 0.0, 0};
  const double len = t2 - t1;
  int panels = 1;
  Mat prev = detail::nested_dyson(pair, order, t1, t2, x, len / panels);
  double est = 0.0;
  while (panels < max_panels) {
    panels *= 2;
    Mat next = detail::nested_dyson(pair, order, t1, t2, x, len / panels);
    est = (next - prev).norm();
    double scale = std::max(next.norm(), 1e-300);
    prev = std::move(next);
    if (est <= tol * scale || est < 1e-300) return {prev, est, panels};
  }
  if (est > tol * std::max(prev.norm(), 1e-300)) throw QuadratureError("dyson_term: quadrature did not converge", est);
  return {prev, est, panels};
}

// Dense superoperator form: column j is the image of the j-th matrix unit.
inline Mat dyson_term(const LiouvillePair& pair, int order, double t2, double t1, std::size_t budget = 900 * 900) {
  const int d = pair.rep().dim();
  const std::size_t n = static_cast<std::size_t>(d) * d;
  if (n * n > budget) throw CapacityError("dyson_term: superoperator exceeds budget");
  Mat out = Mat::Zero(n, n);
  for (int b = 0; b < d; ++b)
    for (int a = 0; a < d; ++a) {
      Mat e = Mat::Zero(d, d);
      e(a, b) = 1.0;
      Mat img = dyson_apply(pair, order, t2, t1, e).value;
      out.col(static_cast<Eigen::Index>(b) * d + a) = Eigen::Map<const Eigen::VectorXcd>(img.data(), n);
    }
  return out;
}

}  // namespace nert
