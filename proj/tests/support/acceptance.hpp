#pragma once

// The acceptance suite: one record per numbered property, measured against a
// fixed tolerance.  Shared by the acceptance test binary and `nert verify`.

#include <chrono>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nert/config.hpp"
#include "nert/corrdyn.hpp"
#include "nert/fock.hpp"
#include "nert/renorm.hpp"
#include "nert/trees.hpp"
#include "support/oracles.hpp"

namespace nert::acceptance {

struct Result {
  int id = 0;
  std::string name;
  bool pass = false;
  bool vacuous = false;
  double measured = 0.0;
  double tolerance = 0.0;
  std::string detail;
  double seconds = 0.0;
};

inline nlohmann::json to_json(const Result& r, bool timing = true) {
  nlohmann::json j{{"id", r.id},       {"name", r.name},           {"pass", r.pass},
                   {"vacuous", r.vacuous}, {"measured", r.measured}, {"tolerance", r.tolerance},
                   {"detail", r.detail}};
  if (timing) j["seconds"] = r.seconds;
  return j;
}

inline std::string line(const Result& r) {
  std::ostringstream o;
  o << "[" << (r.pass ? "PASS" : "FAIL") << "] " << r.id << " " << r.name;
  if (r.vacuous)
    o << ": vacuous";
  else
    o << ": measured " << r.measured << " tolerance " << r.tolerance;
  if (!r.detail.empty()) o << " (" << r.detail << ")";
  return o.str();
}

namespace detail {

inline double rel(const Mat& a, const Mat& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }
inline double rel(cplx a, cplx b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Running maximum that keeps a NaN.
inline double worst(double acc, double e) { return std::isnan(acc) || std::isnan(e) ? std::nan("") : std::max(acc, e); }

inline std::mt19937 stream(unsigned seed, int id) {
  std::seed_seq s{seed, static_cast<unsigned>(id)};
  return std::mt19937(s);
}

struct Grid {
  ModeGrid grid;
  OccupationField n;
  DoubledRep rep;
  InteractionKernel kernel;
  LiouvillePair pair;
  WickContext w;
  NormalPolynomial lint;
  Mat rho;

  Grid(const RunConfig& c, const OccupationSpec& occ)
      : grid(c.grid()),
        n(grid, occ),
        rep(grid, c.n_max),
        kernel(c.kernel()),
        pair(rep, kernel, 1.0),
        w(grid, n),
        lint(interaction_polynomial(w, kernel)),
        rho(reference_state(rep, n)) {}

  Mat R(const NormalPolynomial& p) const { return realize(rep, w, rho, p); }
};

inline NormalPolynomial field_poly(const ModeGrid& g, std::mt19937& rng, int terms) {
  std::uniform_int_distribution<int> spec(0, 3), mode(0, static_cast<int>(g.size()) - 1);
  std::normal_distribution<double> nd;
  NormalPolynomial p;
  for (int i = 0; i < terms; ++i) p.add({Generator::from_species(spec(rng), mode(rng))}, {nd(rng), nd(rng)});
  return p;
}

inline FriedrichsDiagram one_vertex(bool thermal) {
  for (const auto& g : enumerate_diagrams(DirectedTree::from_parents({0}), {thermal}))
    if (g.branches()[0] == Branch::Minus) return g;
  throw Error("one_vertex: not found");
}

inline RenormSettings settings(double T, int order, double tol) {
  RenormSettings rs;
  rs.window = T;
  rs.xi = window_for(std::max(order, 1));
  rs.quad.tol = tol;
  return rs;
}

inline std::string fmt(double x) {
  std::ostringstream o;
  o.precision(3);
  o << x;
  return o.str();
}

}  // namespace detail

// Criteria share the counterterm table; it is built once, on first use.
class Suite {
 public:
  explicit Suite(RunConfig c) : cfg_(std::move(c)) {
    if (cfg_.order > 2) throw Error("verify: order must be at most 2");
  }

  std::vector<Result> run(const std::function<void(const Result&)>& report = {}) {
    using Check = Result (Suite::*)();
    static const std::vector<std::pair<std::string, Check>> checks{
        {"oracle equivalence", &Suite::oracle_equivalence},
        {"intertwining", &Suite::intertwining},
        {"combinatorics", &Suite::combinatorics},
        {"two-point table", &Suite::two_point_table},
        {"sector identities", &Suite::sector_identities},
        {"locality", &Suite::locality},
        {"consistency", &Suite::consistency},
        {"finiteness", &Suite::finiteness},
        {"time translation", &Suite::time_translation},
        {"weak cluster", &Suite::weak_cluster},
        {"reality and factorization", &Suite::reality},
    };
    std::vector<Result> out;
    for (std::size_t i = 0; i < checks.size(); ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      Result r;
      if (cfg_.order == 0) {
        r.pass = r.vacuous = true;
      } else {
        try {
          r = (this->*checks[i].second)();
        } catch (const std::exception& e) {
          r = Result{};
          r.detail = std::string("error: ") + e.what();
        }
      }
      if (std::isnan(r.measured)) r.pass = false;
      r.id = static_cast<int>(i) + 1;
      r.name = checks[i].first;
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      // The runtime bound is part of the first criterion.
      if (r.id == 1 && !r.vacuous && r.seconds > 120.0) {
        r.pass = false;
        r.detail += "; runtime " + detail::fmt(r.seconds) + " s exceeds 120 s";
      }
      if (report) report(r);
      out.push_back(r);
    }
    return out;
  }

  const CountertermTable& table() {
    if (!table_) table_ = counterterm_recursion(cfg_.order, cs(), rs(), cfg_.thermal());
    return *table_;
  }

 private:
  RunConfig cfg_;
  std::optional<CountertermTable> table_;

  ContinuumSetup cs() const { return cfg_.continuum(cfg_.dimension); }
  RenormSettings rs() const {
    auto r = detail::settings(cfg_.window, cfg_.order, cfg_.tolerance);
    r.cap = cfg_.cap;
    return r;
  }

  // The configured state, plus a weakly occupied Gaussian when that state is
  // the vacuum (on which the normal-ordered interaction acts trivially).
  std::vector<std::pair<std::string, OccupationSpec>> states() const {
    std::vector<std::pair<std::string, OccupationSpec>> out{{cfg_.occupation, cfg_.occupation_spec()}};
    if (cfg_.occupation == "vacuum")
      out.push_back({"gaussian n0=" + detail::fmt(cfg_.thermal_check_n0),
                     GaussianForm{cfg_.thermal_check_n0, cfg_.occupation_width}});
    return out;
  }

  // Relative error, or error on the scale of the state when the reference
  // vanishes.
  static std::pair<double, bool> error(const Mat& a, const Mat& ref, const Mat& rho) {
    if (ref.norm() <= 1e-14 * rho.norm()) return {(a - ref).norm() / rho.norm(), true};
    return {detail::rel(a, ref), false};
  }

  static Result vacuous(const std::string& why) {
    Result r;
    r.pass = r.vacuous = true;
    r.detail = why;
    return r;
  }

  // 1. Tree expansion against the Dyson term on the reference state.
  Result oracle_equivalence() {
    Result r;
    r.tolerance = 1e-7;
    for (const auto& [name, occ] : states()) {
      detail::Grid b(cfg_, occ);
      for (int order = 1; order <= cfg_.order; ++order) {
        Mat tree = b.R(tree_expansion(b.w, b.lint, order, 1.0, 0.0));
        Mat dyson = dyson_apply(b.pair, order, 1.0, 0.0, b.rho).value;
        const auto [e, zero] = error(tree, dyson, b.rho);
        r.measured = detail::worst(r.measured, e);
        r.detail += (r.detail.empty() ? "" : "; ") + name + " order " + std::to_string(order) + " " + detail::fmt(e) +
                    (zero ? " (term vanishes)" : "");
      }
    }
    r.pass = r.measured <= r.tolerance;
    return r;
  }

  // 2. F U^c = U F at first order.
  Result intertwining() {
    Result r;
    r.tolerance = 1e-8;
    detail::Grid b(cfg_, cfg_.occupation_spec());
    auto rng = detail::stream(cfg_.seed, 2);
    for (int i = 0; i < 10; ++i) {
      auto v = CorrelationVector::of({detail::field_poly(b.grid, rng, 2), detail::field_poly(b.grid, rng, 2)});
      Mat lhs = b.R(flatten_F(uc_order1(b.w, b.lint, v, 1.0, 0.0)));
      Mat rhs = dyson_apply(b.pair, 1, 1.0, 0.0, b.R(flatten_F(v))).value;
      r.measured = detail::worst(r.measured, detail::rel(lhs, rhs));
    }
    r.detail = "10 vectors";
    r.pass = r.measured <= r.tolerance;
    return r;
  }

  // 3. Enumeration, right subtrees and quotient composition; measured is the
  // number of mismatches.
  Result combinatorics() {
    Result r;
    int bad = 0, cases = 0;
    for (int n = 1; n <= 4; ++n)
      for (int s = 0; s <= (n <= 2 ? 2 : 1); ++s) {
        auto a = enumerate_trees(n, s);
        auto b = oracle::brute_force(n, s, 4);
        ++cases;
        if (std::set<DirectedTree>(a.begin(), a.end()) != std::set<DirectedTree>(b.begin(), b.end()) ||
            a.size() != b.size())
          ++bad;
      }
    for (int n = 1; n <= 3; ++n)
      for (const auto& t : enumerate_trees(n, 1)) {
        auto rs = right_subtrees(t);
        auto expect = oracle::antichains(t);
        ++cases;
        if (rs.size() != expect.size()) {
          ++bad;
          continue;
        }
        for (std::size_t i = 0; i < rs.size(); ++i)
          if (rs[i].antichain != expect[i] || !rs[i].tree.right()) ++bad;
        std::vector<int> internal;
        for (const auto& l : t.lines())
          if (l.kind == LineKind::Internal) internal.push_back(l.id);
        const int k = static_cast<int>(internal.size());
        for (unsigned ma = 0; ma < (1u << k); ++ma)
          for (unsigned mb = 0; mb < (1u << k); ++mb) {
            if (ma & mb) continue;
            std::set<int> x, y, xy;
            for (int i = 0; i < k; ++i) {
              if (ma & (1u << i)) x.insert(internal[i]), xy.insert(internal[i]);
              if (mb & (1u << i)) y.insert(internal[i]), xy.insert(internal[i]);
            }
            ++cases;
            if (!(quotient_tree(quotient_tree(t, x), y) == quotient_tree(t, xy))) ++bad;
          }
      }
    r.measured = bad;
    r.detail = std::to_string(cases) + " cases";
    r.pass = bad == 0;
    return r;
  }

  // 4. two_point against the hand-entered table.
  Result two_point_table() {
    Result r;
    r.tolerance = 1e-10;
    double vac = 0.0;
    {
      ModeGrid g = cfg_.grid();
      auto rep = represent(g, cfg_.n_max);
      auto n = occupation(g, VacuumForm{});
      Mat rho = reference_state(rep, n);
      for (int m = 0; m < static_cast<int>(g.size()); ++m)
        for (int x = 0; x < 4; ++x)
          for (int y = 0; y < 4; ++y) {
            auto [c0, c1] = oracle::two_point_entry(x, y);
            cplx v = two_point(rep, rho, Generator::from_species(x, m), Generator::from_species(y, m));
            vac = detail::worst(vac, std::abs(v - c0 / g.weight(m)));
          }
    }
    // Thermal: a weakly occupied two-mode grid with a deep truncation.
    ModeGrid g = build_grid(1, 2, 1.0, -1.0);
    auto rep = represent(g, 14);
    auto n = occupation(g, GaussianForm{0.05, 0.5});
    Mat rho = reference_state(rep, n);
    for (int m = 0; m < 2; ++m)
      for (int x = 0; x < 4; ++x)
        for (int y = 0; y < 4; ++y) {
          auto [c0, c1] = oracle::two_point_entry(x, y);
          cplx v = two_point(rep, rho, Generator::from_species(x, m), Generator::from_species(y, m));
          r.measured = detail::worst(r.measured, std::abs(v - (c0 + c1 * n[m]) / g.weight(m)));
        }
    r.detail = "vacuum deviation " + detail::fmt(vac) + " (exact required)";
    r.pass = vac == 0.0 && r.measured <= r.tolerance;
    return r;
  }

  // 5. Partition of unity and delta normalization.  Exact here means equal to
  // one up to rounding in the product of the window values.
  Result sector_identities() {
    Result r;
    r.tolerance = 1e-10;
    const double ulp = 8 * std::numeric_limits<double>::epsilon();
    auto rng = detail::stream(cfg_.seed, 5);
    std::uniform_real_distribution<double> u(0.0, 0.4);
    const Window xi = window_for(2);
    double part = 0.0;
    for (int k = 0; k < 100; ++k) {
      std::vector<double> s{u(rng), u(rng), u(rng)};
      double sum = 0.0;
      for (unsigned a = 0; a < 8; ++a) sum += eta(a, s, xi);
      part = detail::worst(part, std::abs(sum - 1.0));
    }
    for (double x : {0.5, 1.0, 2.0}) r.measured = detail::worst(r.measured, std::abs(delta_normalization(x).value - 1.0));
    r.detail = "partition deviation " + detail::fmt(part) + " (rounding bound " + detail::fmt(ulp) + ")";
    r.pass = part <= ulp && r.measured <= r.tolerance;
    return r;
  }

  // 6. Counterterms vanish on probes with a zero of order > N.
  Result locality() {
    Result r;
    auto rng = detail::stream(cfg_.seed, 6);
    int checked = 0;
    for (const auto& [id, e] : table().entries()) {
      if (e.structural_zero) continue;
      int total = 0;
      for (int d : e.counterterm.degree) total += d;
      const int n = static_cast<int>(e.counterterm.degree.size());
      for (int k = 0; k < cfg_.probes; ++k) {
        auto psi = random_probe(n, rng, total + 1, total + 3, 0.3);
        r.measured = detail::worst(r.measured, std::abs(e.counterterm.c.apply(psi)));
        ++checked;
      }
    }
    r.detail = std::to_string(checked) + " probes over " + std::to_string(table().entries().size()) + " entries";
    r.pass = r.measured == 0.0;
    return r;
  }

  // 7. The inserted sub-counterterm equals the direct inner subtraction on
  // every renormalizable order-2 chain.
  Result consistency() {
    if (cfg_.order < 2) return vacuous("needs order 2");
    Result r;
    r.tolerance = 1e-7;
    auto rng = detail::stream(cfg_.seed, 7);
    struct Job {
      FriedrichsDiagram g;
      TestFunction psi;
    };
    std::vector<Job> jobs;
    for (const auto& t : enumerate_trees(2))
      if (t.connected())
        for (const auto& g : enumerate_diagrams(t, {cfg_.thermal()})) {
          const auto& e = table().at(g.id());
          if (e.structural_zero || e.simply_subtracted) continue;
          for (int k = 0; k < cfg_.probes; ++k) jobs.push_back({g, random_probe(2, rng, 0, 3, 0.3)});
        }
    const auto settings = rs();
    auto errs = parallel_map<double>(jobs.size(), [&](std::size_t i) {
      const auto& g = jobs[i].g;
      auto a = s_amplitude(g, cs());
      const auto& deg = table().at(g.id()).counterterm.degree;
      const int inner = a.variable(g.tree().lines_of(LineKind::Internal).front().id);
      auto lhs = inner_counterterm_direct(a, inner, deg, jobs[i].psi, settings).value;
      auto rhs = star_insert(a, inner, deg, jobs[i].psi, settings).value;
      return detail::rel(rhs, lhs);
    });
    for (double e : errs) r.measured = detail::worst(r.measured, e);
    r.detail = std::to_string(jobs.size() / cfg_.probes) + " diagrams, " + std::to_string(cfg_.probes) + " probes each";
    r.pass = !jobs.empty() && r.measured <= r.tolerance;
    return r;
  }

  // 8. Window doubling on the single-exchange chain.
  Result finiteness() {
    if (cfg_.order < 2) return vacuous("needs order 2");
    Result r;
    r.tolerance = 0.01;
    auto g = single_exchange_chain(cfg_.thermal());
    auto a = s_amplitude(g, cs());
    auto deg = subtraction_degree(divergence_degree(a), cfg_.cap);
    auto rng = detail::stream(cfg_.seed, 8);
    auto psi = random_probe(2, rng, 0, 3, 0.3);
    if (psi.coefficient({0, 0}) == cplx(0.0)) throw Error("finiteness: probe vanishes at the origin");
    const double T = cfg_.window;
    auto at = [&](double w, bool sub) {
      auto s = rs();
      s.window = w;
      return sub ? renormalized(a, psi, deg, s).value : pairing(a, psi, s).value;
    };
    auto pair = parallel_map<cplx>(4, [&](std::size_t i) { return at(i % 2 ? 2 * T : T, i < 2); });
    const double drift = detail::rel(pair[1], pair[0]);
    const double bare = detail::rel(pair[3], pair[2]);
    r.measured = cfg_.subtraction ? drift : bare;
    const bool control = bare > 10 * r.tolerance;
    r.detail = std::string(cfg_.subtraction ? "renormalized" : "subtraction off, bare") + " drift T=" +
               detail::fmt(T) + "->" + detail::fmt(2 * T) + "; negative control drift " + detail::fmt(bare) +
               (control ? " > " : " <= ") + detail::fmt(10 * r.tolerance);
    r.pass = r.measured <= r.tolerance && control;
    return r;
  }

  // 9. Invariant extension on probes and the grid counterterm properties.
  Result time_translation() {
    Result r;
    r.tolerance = 1e-7;
    AmplitudeOptions o;
    o.clock = true;
    auto a = s_amplitude(detail::one_vertex(cfg_.thermal()), cs(), o);
    auto s = detail::settings(1e7, 1, 1e-11);
    auto rng = detail::stream(cfg_.seed, 9);
    std::vector<ProbePoly> probes;
    for (int k = 0; k < cfg_.probes; ++k) probes.push_back(random_poly(1, rng, 0, 3));
    for (double t : {0.1, 1.0}) {
      auto kappa = invariant_extension(a, 1, t, s);
      auto errs = parallel_map<double>(probes.size(), [&](std::size_t i) {
        cplx before = extended_pairing(a.with_clock(0.0), polynomial_probe(1, probes[i], 0.3), 1, {0.0, 0.0}, s);
        cplx after = extended_pairing(a.with_clock(t), shifted_probe(probes[i], 0.3, t), 1, kappa, s);
        return detail::rel(after, before);
      });
      for (double e : errs) r.measured = detail::worst(r.measured, e);
    }
    // Grid level, first order.
    double grid = 0.0;
    std::string where;
    for (const auto& [name, occ] : states()) {
      detail::Grid b(cfg_, occ);
      for (double T : {5.0, 40.0}) {
        auto r0 = renormalized_state(b.w, b.lint, 0.0, T);
        for (double t : {0.3, 1.0}) {
          auto rt = renormalized_state(b.w, b.lint, t, T);
          Mat here = b.R(rt);
          // Stationarity is measured on the deviation from the free state.
          const auto [e1, z1] = error(b.R(free_evolve(b.grid, r0, -t)) - b.rho, here - b.rho, b.rho);
          const auto [e2, z2] = error(b.R(rt - r0), dyson_apply(b.pair, 1, t, 0.0, b.rho).value, b.rho);
          grid = detail::worst(detail::worst(grid, e1), e2);
          if (z1 || z2) where = " (vanishes on " + name + ")";
        }
      }
    }
    r.detail = std::to_string(cfg_.probes) + " probes at t=0.1,1; grid properties " + detail::fmt(grid) +
               where + " (tolerance 1e-08)";
    r.pass = r.measured <= r.tolerance && grid <= 1e-8;
    return r;
  }

  // 10. Decay of the phase-translated order-2 pairing.
  Result weak_cluster() {
    if (cfg_.order < 2) return vacuous("needs order 2");
    Result r;
    r.tolerance = 0.1;
    auto c = cfg_.continuum(cfg_.cluster_dimension);
    auto g = exchange_chain(2, cfg_.thermal());
    auto rng = detail::stream(cfg_.seed, 10);
    auto psi = exponential_probe(2, random_poly(2, rng, 0, 3), 0.05);
    auto deg = subtraction_degree(divergence_degree(s_amplitude(g, c)), cfg_.cap);
    auto fit = cluster_decay(g, c, {0, 2}, {10, 20, 40, 80}, psi, deg, detail::settings(cfg_.cluster_window, 2, 1e-7));
    r.measured = fit.residual;
    r.detail = "exponent " + detail::fmt(fit.exponent) + " (>= 2), log residual " + detail::fmt(fit.residual) +
               ", max deviation " + detail::fmt(fit.max_deviation) + (fit.monotone ? ", monotone" : ", not monotone");
    r.pass = fit.exponent >= 2.0 && fit.residual < r.tolerance && fit.monotone;
    return r;
  }

  // 11. Star closure of the table and factorization of a forest.
  Result reality() {
    Result r;
    r.tolerance = 1e-8;
    int symbolic = 0;
    double coef = 0.0;
    for (int n = 1; n <= cfg_.order; ++n)
      for (const auto& t : enumerate_trees(n))
        for (const auto& g : enumerate_diagrams(t, {cfg_.thermal()})) {
          auto s = star_diagram(g);
          if (!table().contains(s.id())) {
            ++symbolic;
            continue;
          }
          if (to_json(conjugate(integrand(g, cs()))) != to_json(integrand(s, cs()))) ++symbolic;
          const auto& a = table().at(g.id()).counterterm.c.coef;
          const auto& b = table().at(s.id()).counterterm.c.coef;
          if (a.size() != b.size()) {
            ++symbolic;
            continue;
          }
          for (const auto& [m, c] : a) {
            auto it = b.find(m);
            if (it == b.end()) {
              ++symbolic;
              continue;
            }
            coef = detail::worst(coef, std::abs(c - std::conj(it->second)) / std::max(std::abs(c), 1e-300));
          }
        }
    std::string fact = "factorization needs order 2";
    if (cfg_.order >= 2) {
      FriedrichsDiagram forest;
      bool found = false;
      for (const auto& g : enumerate_diagrams(DirectedTree::from_parents({0, 0}), {cfg_.thermal()}))
        if (g.branches()[0] == Branch::Minus && g.branches()[1] == Branch::Minus) forest = g, found = true;
      if (!found) throw Error("reality: no forest diagram");
      auto s = detail::settings(1e3, 2, 1e-12);
      auto joint = subtract(s_amplitude(forest, cs()), {1, 1}, s);
      auto single = subtract(s_amplitude(detail::one_vertex(cfg_.thermal()), cs()), {1}, s);
      for (const auto& [m, c] : joint.c.coef)
        r.measured = detail::worst(r.measured, detail::rel(c, single.c.coef.at({m[0]}) * single.c.coef.at({m[1]})));
      fact = "factorization " + detail::fmt(r.measured);
    }
    r.measured = detail::worst(r.measured, coef);
    r.detail = std::to_string(symbolic) + " symbolic mismatches; coefficient conjugation " + detail::fmt(coef) + "; " +
               fact;
    r.pass = symbolic == 0 && r.measured <= r.tolerance;
    return r;
  }
};

inline bool all_pass(const std::vector<Result>& rs) {
  for (const auto& r : rs)
    if (!r.pass) return false;
  return true;
}

}  // namespace nert::acceptance
