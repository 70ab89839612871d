// Batch driver.  Every subcommand takes an optional config file (key = value
// lines) as its positional argument; flags override individual keys.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include "nert/config.hpp"
#include "nert/corrdyn.hpp"
#include "nert/fock.hpp"
#include "nert/renorm.hpp"
#include "support/acceptance.hpp"

using namespace nert;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<int> order, grid, n_max, probes, workers;
  std::optional<double> window;
  std::optional<unsigned> seed;
  bool bit_repro = false;
  std::string out, csv;
};

void add_common(CLI::App* c, Common& o) {
  c->add_option("config", o.config, "key = value config file")->check(CLI::ExistingFile);
  c->add_option("--order", o.order, "perturbative order")->check(CLI::NonNegativeNumber);
  c->add_option("--grid", o.grid, "grid points per axis")->check(CLI::PositiveNumber);
  c->add_option("--n-max", o.n_max, "occupation cutoff per mode")->check(CLI::PositiveNumber);
  c->add_option("--window,-T", o.window, "time window T")->check(CLI::PositiveNumber);
  c->add_option("--probes", o.probes, "random probes per check")->check(CLI::PositiveNumber);
  c->add_option("--seed", o.seed, "probe seed");
  c->add_option("--workers", o.workers, "worker threads (default: NERT_WORKERS)")->check(CLI::PositiveNumber);
  c->add_flag("--bit-repro", o.bit_repro, "omit timings so reruns are byte-identical");
  c->add_option("--out,-o", o.out, "JSON output path (default stdout)");
}

RunConfig resolve(const Common& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.order) c.order = *o.order;
  if (o.grid) c.grid_points = *o.grid;
  if (o.n_max) c.n_max = *o.n_max;
  if (o.window) c.window = *o.window;
  if (o.probes) c.probes = *o.probes;
  if (o.seed) c.seed = *o.seed;
  if (o.workers) setenv("NERT_WORKERS", std::to_string(*o.workers).c_str(), 1);
  worker_count();
  return c;
}

void emit(const Common& o, const json& j) {
  if (o.out.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream f(o.out);
  if (!f) throw Error("cannot write " + o.out);
  f << j.dump(2) << "\n";
}

void emit_csv(const std::string& path, const std::string& text) {
  if (path.empty()) return;
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path);
  f << text;
}

std::string csv_join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + std::to_string(v[i]);
  return s;
}

std::string num(double x) {
  std::ostringstream o;
  o.precision(10);
  o << x;
  return o.str();
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RenormSettings settings_for(const RunConfig& c) {
  RenormSettings rs;
  rs.window = c.window;
  rs.xi = window_for(std::max(c.order, 1));
  rs.quad.tol = c.tolerance;
  rs.cap = c.cap;
  return rs;
}

std::vector<FriedrichsDiagram> diagrams_of(int n, bool thermal) {
  std::vector<FriedrichsDiagram> out;
  for (const auto& t : enumerate_trees(n))
    for (auto& g : enumerate_diagrams(t, {thermal})) out.push_back(std::move(g));
  return out;
}

// ---------------------------------------------------------------------------

json cmd_trees(const RunConfig& c, int shoots, bool subtrees) {
  json list = json::array();
  for (const auto& t : enumerate_trees(c.order, shoots)) {
    json j = to_json(t);
    j["right"] = t.right();
    if (subtrees) {
      json rs = json::array();
      for (const auto& r : right_subtrees(t)) rs.push_back({{"antichain", r.antichain}, {"tree", to_json(r.tree)}});
      j["right_subtrees"] = rs;
    }
    list.push_back(j);
  }
  return {{"n", c.order}, {"shoots", shoots}, {"count", list.size()}, {"trees", list}};
}

json cmd_diagrams(const RunConfig& c) {
  json list = json::array();
  for (const auto& g : diagrams_of(c.order, c.thermal())) {
    json j = to_json(g);
    j["renormalizable"] = renormalizable(g);
    list.push_back(j);
  }
  return {{"order", c.order}, {"thermal", c.thermal()}, {"count", list.size()}, {"diagrams", list}};
}

json cmd_amplitude(const RunConfig& c, const std::string& only, const std::vector<double>& taus) {
  const auto cs = c.continuum(c.dimension);
  json list = json::array();
  for (const auto& g : diagrams_of(c.order, c.thermal())) {
    if (!only.empty() && g.id() != only) continue;
    json j{{"id", g.id()}};
    auto a = s_amplitude(g, cs);
    j["structural_zero"] = a.tf.structural_zero;
    if (!a.tf.structural_zero) {
      j["tau_function"] = to_json(a.tf);
      j["omega"] = divergence_degree(a);
      json vals = json::array();
      for (double t : taus) {
        cplx v = a.at_tau(std::vector<double>(a.n(), t));
        vals.push_back({{"tau", t}, {"re", v.real()}, {"im", v.imag()}});
      }
      j["values"] = vals;
    }
    list.push_back(j);
  }
  if (!only.empty() && list.empty()) throw Error("amplitude: no diagram " + only + " at order " + std::to_string(c.order));
  return {{"order", c.order}, {"dimension", c.dimension}, {"amplitudes", list}};
}

json cmd_oracle_compare(const RunConfig& c, double t0, double t1, bool timing) {
  if (c.order > 3) throw Error("oracle-compare: order must be at most 3");
  ModeGrid grid = c.grid();
  OccupationField n(grid, c.occupation_spec());
  DoubledRep rep(grid, c.n_max);
  LiouvillePair pair(rep, c.kernel(), 1.0);
  WickContext w(grid, n);
  auto lint = interaction_polynomial(w, c.kernel());
  Mat rho = reference_state(rep, n);
  json list = json::array();
  for (int k = 1; k <= c.order; ++k) {
    auto s = std::chrono::steady_clock::now();
    Mat tree = realize(rep, w, rho, tree_expansion(w, lint, k, t1, t0));
    auto d = dyson_apply(pair, k, t1, t0, rho);
    json j{{"order", k},
           {"interval", {t0, t1}},
           {"norm_difference", (tree - d.value).norm()},
           {"norm", d.value.norm()},
           {"quadrature_error", d.error}};
    if (timing) j["seconds"] = elapsed(s);
    list.push_back(j);
  }
  return {{"config", to_json(c)}, {"comparisons", list}};
}

// One-delay invariance residual at t = 1 over the configured probes.
double invariance_residual(const FriedrichsDiagram& g, const RunConfig& c, std::mt19937& rng) {
  AmplitudeOptions o;
  o.clock = true;
  auto a = s_amplitude(g, c.continuum(c.dimension), o);
  RenormSettings rs = settings_for(c);
  rs.window = 1e7;
  rs.quad.tol = 1e-11;
  const int deg = subtraction_degree(divergence_degree(a), c.cap)[0];
  auto kappa = invariant_extension(a, deg, 1.0, rs);
  double worst = 0.0;
  for (int k = 0; k < c.probes; ++k) {
    auto p = random_poly(1, rng, 0, 3);
    cplx before = extended_pairing(a.with_clock(0.0), polynomial_probe(1, p, 0.3), deg,
                                   std::vector<cplx>(deg + 1, 0.0), rs);
    cplx after = extended_pairing(a.with_clock(1.0), shifted_probe(p, 0.3, 1.0), deg, kappa, rs);
    worst = std::max(worst, std::abs(after - before) / std::abs(before));
  }
  return worst;
}

DecayFit designated_cluster(const RunConfig& c, const std::vector<double>& shifts) {
  auto cs = c.continuum(c.cluster_dimension);
  auto g = exchange_chain(2, c.thermal());
  std::mt19937 rng(c.seed);
  auto psi = exponential_probe(2, random_poly(2, rng, 0, 3), 0.05);
  auto deg = subtraction_degree(divergence_degree(s_amplitude(g, cs)), c.cap);
  RenormSettings rs;
  rs.window = c.cluster_window;
  rs.xi = window_for(2);
  rs.quad.tol = 1e-7;
  rs.cap = c.cap;
  return cluster_decay(g, cs, {0, 2}, shifts, psi, deg, rs);
}

json fit_json(const DecayFit& f) {
  return {{"exponent", f.exponent},         {"residual", f.residual}, {"max_deviation", f.max_deviation},
          {"monotone", f.monotone},         {"a", f.a},               {"magnitude", f.magnitude}};
}

json cmd_renorm(const RunConfig& c, const std::string& csv_path, bool timing) {
  auto s = std::chrono::steady_clock::now();
  const auto cs = c.continuum(c.dimension);
  const auto rs = settings_for(c);
  auto table = counterterm_recursion(c.order, cs, rs, c.thermal());
  std::mt19937 rng(c.seed);
  std::optional<std::string> designated;
  std::optional<DecayFit> decay;
  if (c.order >= 2) {
    designated = exchange_chain(2, c.thermal()).id();
    decay = designated_cluster(c, {10, 20, 40, 80});
  }
  std::map<std::string, FriedrichsDiagram> by_id;
  for (int n = 1; n <= c.order; ++n)
    for (auto& g : diagrams_of(n, c.thermal())) by_id.emplace(g.id(), std::move(g));
  json report = json::array();
  std::ostringstream csv;
  csv << "diagram,order,N,simply_subtracted,counterterm_error,sector_error,pairing_error,invariance_residual,"
         "decay_exponent\n";
  for (const auto& [id, e] : table.entries()) {
    json row{{"diagram", id}, {"order", e.order}, {"N", e.counterterm.degree}};
    std::string sector, pairing_err, inv, dec;
    if (!e.structural_zero) {
      const auto& g = by_id.at(id);
      auto a = s_amplitude(g, cs);
      auto psi = random_probe(a.n(), rng, 0, 3, 0.3);
      const auto& deg = e.counterterm.degree;
      auto ren = renormalized(a, psi, deg, rs);
      pairing_err = num(ren.error);
      row["pairing_error"] = ren.error;
      if (a.n() == 1) {
        auto h = [&](const std::vector<double>& x) { return a(x) * subtracted(psi, deg, rs.xi, x); };
        auto sec = sector_pairing(h, 1, std::max(psi.support, rs.xi.edge), rs.xi, 1.0 / rs.window, rs.quad);
        double m = 0.0;
        for (double x : sec.error) m = std::max(m, x);
        sector = num(m);
        row["sector_error"] = sec.error;
        const double r = invariance_residual(g, c, rng);
        inv = num(r);
        row["invariance_residual"] = r;
      }
      if (designated && id == *designated) {
        dec = num(decay->exponent);
        row["decay"] = fit_json(*decay);
      }
    }
    row["counterterm_error"] = e.counterterm.error;
    report.push_back(row);
    csv << id << "," << e.order << "," << csv_join(e.counterterm.degree) << "," << (e.simply_subtracted ? 1 : 0)
        << "," << num(e.counterterm.error) << "," << sector << "," << pairing_err << "," << inv << "," << dec << "\n";
  }
  emit_csv(csv_path, csv.str());
  json j{{"config", to_json(c)}, {"table", to_json(table)}, {"report", report}};
  if (timing) j["seconds"] = elapsed(s);
  return j;
}

json cmd_cluster(const RunConfig& c, const std::vector<double>& shifts, const std::string& csv_path, bool timing) {
  auto s = std::chrono::steady_clock::now();
  auto fit = designated_cluster(c, shifts);
  std::ostringstream csv;
  csv << "a,magnitude\n";
  for (std::size_t i = 0; i < fit.a.size(); ++i) csv << num(fit.a[i]) << "," << num(fit.magnitude[i]) << "\n";
  emit_csv(csv_path, csv.str());
  json j{{"diagram", exchange_chain(2, c.thermal()).id()},
         {"dimension", c.cluster_dimension},
         {"window", c.cluster_window},
         {"fit", fit_json(fit)}};
  if (timing) j["seconds"] = elapsed(s);
  return j;
}

json cmd_verify(const RunConfig& c, bool timing, bool& ok) {
  auto s = std::chrono::steady_clock::now();
  acceptance::Suite suite(c);
  auto results = suite.run([](const acceptance::Result& r) { std::cerr << acceptance::line(r) << std::endl; });
  ok = acceptance::all_pass(results);
  json list = json::array();
  for (const auto& r : results) list.push_back(acceptance::to_json(r, timing));
  json j{{"config", to_json(c)}, {"criteria", list}, {"pass", ok}};
  if (timing) j["seconds"] = elapsed(s);
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perturbative dynamics and renormalization driver"};
  app.require_subcommand(1);
  Common o;
  int shoots = 0;
  bool subtrees = false;
  std::string diagram;
  std::vector<double> taus{1.0};
  double t0 = 0.0, t1 = 1.0;
  std::vector<double> shifts{10, 20, 40, 80};

  auto* trees = app.add_subcommand("trees", "enumerate right rooted forests");
  add_common(trees, o);
  trees->add_option("--shoots", shoots, "shoots per tree")->check(CLI::NonNegativeNumber);
  trees->add_flag("--right-subtrees", subtrees, "annotate each tree with its right subtrees");

  auto* diagrams = app.add_subcommand("diagrams", "enumerate diagrams at the given order");
  add_common(diagrams, o);

  auto* amplitude = app.add_subcommand("amplitude", "momentum-integrated delay amplitudes");
  add_common(amplitude, o);
  amplitude->add_option("--diagram", diagram, "restrict to one diagram id");
  amplitude->add_option("--tau", taus, "delays at which to evaluate (all lines equal)");

  auto* oracle = app.add_subcommand("oracle-compare", "tree expansion against the Dyson term");
  add_common(oracle, o);
  oracle->add_option("--from", t0, "window start");
  oracle->add_option("--to", t1, "window end");

  auto* renorm = app.add_subcommand("renorm", "counterterm table and per-diagram report");
  add_common(renorm, o);
  renorm->add_option("--csv", o.csv, "report CSV path");

  auto* cluster = app.add_subcommand("cluster", "decay of the translated order-2 pairing");
  add_common(cluster, o);
  cluster->add_option("--shifts", shifts, "translation distances")->expected(2, -1);
  cluster->add_option("--csv", o.csv, "magnitude CSV path");

  auto* verify = app.add_subcommand("verify", "run the acceptance suite");
  add_common(verify, o);

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig c = resolve(o);
    const bool timing = !o.bit_repro;
    if (app.got_subcommand(trees)) {
      emit(o, cmd_trees(c, shoots, subtrees));
    } else if (app.got_subcommand(diagrams)) {
      emit(o, cmd_diagrams(c));
    } else if (app.got_subcommand(amplitude)) {
      emit(o, cmd_amplitude(c, diagram, taus));
    } else if (app.got_subcommand(oracle)) {
      emit(o, cmd_oracle_compare(c, t0, t1, timing));
    } else if (app.got_subcommand(renorm)) {
      emit(o, cmd_renorm(c, o.csv, timing));
    } else if (app.got_subcommand(cluster)) {
      emit(o, cmd_cluster(c, shifts, o.csv, timing));
    } else {
      bool ok = false;
      emit(o, cmd_verify(c, timing, ok));
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
