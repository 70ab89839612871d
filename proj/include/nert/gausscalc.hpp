#pragma once

// Closed-form integration of Gaussian integrands with quadratic phases and
// linear delta constraints:
//   int dx delta(C x) c exp(-x^T A0 x + i sum_j tau_j (x^T B_j x + nu_j) + J^T x)
// with every variable a d-dimensional momentum.  Quadratic forms act
// isotropically on the spatial components, the linear term J may differ per
// component.

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "nert/modespace.hpp"

namespace nert {

using MatR = Eigen::MatrixXd;
using VecR = Eigen::VectorXd;
using MatC = Eigen::MatrixXcd;

struct NonIntegrable : Error {
  using Error::Error;
};

struct GaussTerm {
  cplx coef = 1.0;
  MatR a0;                 // nv x nv, symmetric
  std::vector<MatR> b;     // per tau: nv x nv symmetric
  std::vector<double> nu;  // per tau: constant rate
  MatC j;                  // nv x d
};

struct Variable {
  std::string name;
  bool external = false;
};

class GaussianIntegrand {
 public:
  GaussianIntegrand() = default;
  GaussianIntegrand(int dimension, std::vector<Variable> vars, int taus)
      : d_(dimension), vars_(std::move(vars)), taus_(taus), c_(0, static_cast<int>(vars_.size())) {}

  int dimension() const { return d_; }
  int variables() const { return static_cast<int>(vars_.size()); }
  int taus() const { return taus_; }
  const std::vector<Variable>& vars() const { return vars_; }
  const MatR& constraints() const { return c_; }
  const std::vector<GaussTerm>& terms() const { return terms_; }
  std::vector<GaussTerm>& terms() { return terms_; }

  GaussTerm blank(cplx coef = 1.0) const {
    const int n = variables();
    GaussTerm t;
    t.coef = coef;
    t.a0 = MatR::Zero(n, n);
    t.b.assign(taus_, MatR::Zero(n, n));
    t.nu.assign(taus_, 0.0);
    t.j = MatC::Zero(n, d_);
    return t;
  }

  void add_constraint(const VecR& row) {
    if (row.size() != variables()) throw Error("GaussianIntegrand: constraint length mismatch");
    c_.conservativeResize(c_.rows() + 1, Eigen::NoChange);
    c_.row(c_.rows() - 1) = row.transpose();
  }
  void add_term(GaussTerm t) { terms_.push_back(std::move(t)); }

  std::vector<int> external_indices() const {
    std::vector<int> e;
    for (int i = 0; i < variables(); ++i)
      if (vars_[i].external) e.push_back(i);
    return e;
  }

  // Multiplies every term by a common Gaussian factor.
  void multiply_gaussian(const MatR& a0) {
    for (auto& t : terms_) t.a0 += a0;
  }

  // Pointwise value of the integrand (constraints not imposed), x: nv x d.
  cplx value(const MatR& x, const std::vector<double>& tau) const {
    cplx v = 0.0;
    for (const auto& t : terms_) {
      cplx e = 0.0;
      for (int c = 0; c < d_; ++c) {
        VecR xc = x.col(c);
        e -= xc.dot(t.a0 * xc);
        for (int k = 0; k < taus_; ++k) e += I * tau[k] * xc.dot(t.b[k] * xc);
        e += (t.j.col(c).transpose() * xc.cast<cplx>())(0, 0);
      }
      for (int k = 0; k < taus_; ++k) e += I * tau[k] * t.nu[k];
      v += t.coef * std::exp(e);
    }
    return v;
  }

 private:
  int d_ = 1;
  std::vector<Variable> vars_;
  int taus_ = 0;
  MatR c_;
  std::vector<GaussTerm> terms_;
};

// Symbolic complex conjugate: conj(coef), conj(J), B -> -B, nu -> -nu.
inline GaussianIntegrand conjugate(const GaussianIntegrand& f) {
  GaussianIntegrand g = f;
  for (auto& t : g.terms()) {
    t.coef = std::conj(t.coef);
    t.j = t.j.conjugate();
    for (auto& b : t.b) b = -b;
    for (auto& n : t.nu) n = -n;
  }
  return g;
}

// Plane wave exp(i a sum_{r in A} p_r^1) on a proper nonempty subset of the
// external variables.
inline GaussianIntegrand translate_phase(const GaussianIntegrand& f, const std::vector<int>& subset, double a) {
  auto ext = f.external_indices();
  if (subset.empty()) throw Error("translate_phase: subset must be nonempty");
  for (int i : subset)
    if (std::find(ext.begin(), ext.end(), i) == ext.end()) throw Error("translate_phase: index is not external");
  if (subset.size() >= ext.size()) throw Error("translate_phase: subset must be a proper subset of external lines");
  GaussianIntegrand g = f;
  if (a == 0.0) return g;
  for (auto& t : g.terms())
    for (int i : subset) t.j(i, 0) += I * a;
  return g;
}

// ---------------------------------------------------------------------------

struct TauTerm {
  cplx prefactor;           // coef * pi^{dk/2} * jacobian^d * det(M0)^{-d/2}
  MatR m0_isqrt;            // M0^{-1/2}
  std::vector<MatR> b;      // reduced B_j
  std::vector<double> nu;
  MatC j;                   // reduced J, k x d
};

class TauFunction {
 public:
  TauFunction() = default;
  TauFunction(int d, int taus, int k) : d_(d), taus_(taus), k_(k) {}

  std::vector<TauTerm>& terms() { return terms_; }
  const std::vector<TauTerm>& terms() const { return terms_; }
  int taus() const { return taus_; }
  int dimension() const { return d_; }
  int reduced_variables() const { return k_; }
  bool structural_zero = false;

  // Value at delays tau.  det(M0 - i S)^{-1/2} is det(M0)^{-1/2} times
  // prod (1 - i beta)^{-1/2} over the eigenvalues beta of M0^{-1/2} S M0^{-1/2};
  // each factor is taken on the principal branch, which is the continuation
  // from tau = 0 because 1 - i beta never meets the negative axis.
  cplx operator()(const std::vector<double>& tau) const {
    if (static_cast<int>(tau.size()) != taus_) throw Error("eval_tau: wrong number of delays");
    cplx v = 0.0;
    for (const auto& t : terms_) {
      MatR s = MatR::Zero(k_, k_);
      cplx rate = 0.0;
      for (int i = 0; i < taus_; ++i) {
        if (tau[i] == 0.0) continue;
        s += tau[i] * t.b[i];
        rate += tau[i] * t.nu[i];
      }
      cplx val = t.prefactor * std::exp(I * rate);
      if (k_ > 0) {
        MatR kmat = t.m0_isqrt * s * t.m0_isqrt;
        Eigen::SelfAdjointEigenSolver<MatR> es(0.5 * (kmat + kmat.transpose()));
        const VecR& beta = es.eigenvalues();
        for (int i = 0; i < k_; ++i) {
          cplx f = 1.0 / std::sqrt(cplx(1.0, -beta[i]));
          cplx p = 1.0;
          for (int c = 0; c < d_; ++c) p *= f;
          val *= p;
        }
        if (t.j.size() > 0 && t.j.norm() > 0.0) {
          MatC w = (es.eigenvectors().transpose() * t.m0_isqrt).cast<cplx>() * t.j;
          cplx q = 0.0;
          for (int c = 0; c < d_; ++c)
            for (int i = 0; i < k_; ++i) q += w(i, c) * w(i, c) / cplx(1.0, -beta[i]);
          val *= std::exp(0.25 * q);
        }
      }
      v += val;
    }
    return v;
  }

 private:
  int d_ = 1;
  int taus_ = 0;
  int k_ = 0;
  std::vector<TauTerm> terms_;
};

inline cplx eval_tau(const TauFunction& f, const std::vector<double>& tau) { return f(tau); }

struct Reduction {
  MatR basis;  // nv x k, orthonormal null space of C
  double jacobian = 1.0;
  bool structural_zero = false;
};

inline Reduction reduce_constraints(const MatR& c, int nv) {
  Reduction r;
  if (c.rows() == 0) {
    r.basis = MatR::Identity(nv, nv);
    return r;
  }
  Eigen::JacobiSVD<MatR> svd(c, Eigen::ComputeFullV);
  const VecR& sv = svd.singularValues();
  const double tol = 1e-10 * std::max(1.0, sv.size() ? sv[0] : 1.0);
  int rank = 0;
  double prod = 1.0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > tol) {
      ++rank;
      prod *= sv[i];
    }
  if (rank < c.rows()) r.structural_zero = true;
  r.jacobian = 1.0 / prod;
  r.basis = svd.matrixV().rightCols(nv - rank);
  return r;
}

// Integrates every variable.  Throws NonIntegrable when the real part of the
// reduced quadratic form is not positive definite.
inline TauFunction integrate_momenta(const GaussianIntegrand& f) {
  const int nv = f.variables();
  Reduction red = reduce_constraints(f.constraints(), nv);
  const int k = static_cast<int>(red.basis.cols());
  const int d = f.dimension();
  TauFunction out(d, f.taus(), k);
  if (red.structural_zero) {
    out.structural_zero = true;
    return out;
  }
  const MatR& n = red.basis;
  for (const auto& t : f.terms()) {
    if (t.coef == cplx(0.0)) continue;
    MatR m0 = n.transpose() * t.a0 * n;
    m0 = 0.5 * (m0 + m0.transpose());
    TauTerm tt;
    double logdet = 0.0;
    if (k > 0) {
      Eigen::SelfAdjointEigenSolver<MatR> es(m0);
      const VecR& ev = es.eigenvalues();
      if (ev.minCoeff() <= 1e-12 * std::max(1.0, ev.maxCoeff()))
        throw NonIntegrable("integrate_momenta: real part of the quadratic form is not definite (min eigenvalue " +
                            std::to_string(ev.minCoeff()) + ")");
      VecR is = ev.array().rsqrt();
      tt.m0_isqrt = es.eigenvectors() * is.asDiagonal() * es.eigenvectors().transpose();
      for (int i = 0; i < k; ++i) logdet += std::log(ev[i]);
    } else {
      tt.m0_isqrt = MatR::Zero(0, 0);
    }
    tt.prefactor = t.coef * std::pow(M_PI, 0.5 * d * k) * std::pow(red.jacobian, d) * std::exp(-0.5 * d * logdet);
    for (const auto& b : t.b) tt.b.push_back(n.transpose() * b * n);
    tt.nu = t.nu;
    tt.j = n.transpose().cast<cplx>() * t.j;
    out.terms().push_back(std::move(tt));
  }
  return out;
}

// ---------------------------------------------------------------------------

inline nlohmann::json matrix_json(const MatR& m) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(row);
  }
  return a;
}

inline nlohmann::json matrix_json(const MatC& m) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
    a.push_back(row);
  }
  return a;
}

inline nlohmann::json to_json(const TauFunction& f) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : f.terms()) {
    nlohmann::json bs = nlohmann::json::array();
    for (const auto& b : t.b) bs.push_back(matrix_json(b));
    terms.push_back({{"prefactor", {t.prefactor.real(), t.prefactor.imag()}},
                     {"m0_inv_sqrt", matrix_json(t.m0_isqrt)},
                     {"b", bs},
                     {"nu", t.nu},
                     {"j", matrix_json(t.j)}});
  }
  return {{"dimension", f.dimension()},
          {"taus", f.taus()},
          {"reduced_variables", f.reduced_variables()},
          {"structural_zero", f.structural_zero},
          {"branch", "principal factors (1 - i beta)^(-1/2), continued from tau = 0"},
          {"terms", terms}};
}

inline nlohmann::json to_json(const GaussianIntegrand& f) {
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : f.vars()) vars.push_back({{"name", v.name}, {"external", v.external}});
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : f.terms()) {
    nlohmann::json bs = nlohmann::json::array();
    for (const auto& b : t.b) bs.push_back(matrix_json(b));
    terms.push_back({{"coef", {t.coef.real(), t.coef.imag()}},
                     {"a0", matrix_json(t.a0)},
                     {"b", bs},
                     {"nu", t.nu},
                     {"j", matrix_json(t.j)}});
  }
  return {{"dimension", f.dimension()},
          {"taus", f.taus()},
          {"variables", vars},
          {"constraints", matrix_json(f.constraints())},
          {"terms", terms}};
}

}  // namespace nert
