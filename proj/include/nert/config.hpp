#pragma once

// Run configuration: a flat key = value file (INI syntax, no sections).

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <json.hpp>

#include <set>
#include <string>

#include "nert/friedrichs.hpp"
#include "nert/modespace.hpp"

namespace nert {

struct RunConfig {
  // mode grid
  int dimension = 1;
  int grid_points = 3;
  double spacing = 1.0;
  double mu = -1.0;
  // reference state: vacuum, planck or gaussian
  std::string occupation = "vacuum";
  double beta = 7.0;
  double n0 = 0.001;
  double occupation_width = 0.3;
  // interaction kernel c exp(-a sum p^2)
  double coupling_re = 1.0;
  double coupling_im = 0.0;
  double kernel_width = 0.3;
  int n_max = 4;
  int order = 2;
  // renormalization
  double window = 50.0;
  double tolerance = 1e-9;
  int probes = 5;
  unsigned seed = 1;
  bool subtraction = true;
  int cap = 4;
  double test_width = 1.0;
  // cluster runs
  int cluster_dimension = 3;
  double cluster_window = 1e5;
  // oracle comparison against a weakly occupied state as well
  double thermal_check_n0 = 0.001;

  ModeGrid grid() const { return build_grid(dimension, grid_points, spacing, mu); }

  OccupationSpec occupation_spec() const {
    if (occupation == "vacuum") return VacuumForm{};
    if (occupation == "planck") return PlanckForm{beta};
    if (occupation == "gaussian") return GaussianForm{n0, occupation_width};
    throw Error("config: occupation must be vacuum, planck or gaussian");
  }

  InteractionKernel kernel() const { return InteractionKernel({coupling_re, coupling_im}, kernel_width); }

  // Continuum integrands take the Gaussian form only.
  ContinuumSetup continuum(int d) const {
    if (occupation == "planck") throw Error("continuum runs need occupation = vacuum or gaussian");
    ContinuumSetup cs;
    cs.dimension = d;
    cs.kernel = kernel();
    cs.mu = mu;
    cs.occupation = thermal() ? GaussianForm{n0, occupation_width} : GaussianForm{0.0, 1.0};
    cs.test_width = test_width;
    return cs;
  }

  bool thermal() const { return occupation == "gaussian"; }
};

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  throw Error("config: " + key + " must be a boolean, got '" + v + "'");
}

inline RunConfig load_config(const std::string& path) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(path, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error("config: " + std::string(e.what()));
  }
  RunConfig c;
  static const std::set<std::string> known{
      "dimension", "grid_points", "spacing",      "mu",         "occupation",        "beta",
      "n0",        "occupation_width", "coupling_re", "coupling_im", "kernel_width", "n_max",
      "order",     "window",       "tolerance",    "probes",     "seed",              "subtraction",
      "cap",       "test_width",   "cluster_dimension", "cluster_window", "thermal_check_n0"};
  for (const auto& [k, v] : pt) {
    if (!v.empty()) throw Error("config: sections are not supported ([" + k + "])");
    if (!known.count(k)) throw Error("config: unknown key '" + k + "'");
  }
  try {
    c.dimension = pt.get("dimension", c.dimension);
    c.grid_points = pt.get("grid_points", c.grid_points);
    c.spacing = pt.get("spacing", c.spacing);
    c.mu = pt.get("mu", c.mu);
    c.occupation = pt.get("occupation", c.occupation);
    c.beta = pt.get("beta", c.beta);
    c.n0 = pt.get("n0", c.n0);
    c.occupation_width = pt.get("occupation_width", c.occupation_width);
    c.coupling_re = pt.get("coupling_re", c.coupling_re);
    c.coupling_im = pt.get("coupling_im", c.coupling_im);
    c.kernel_width = pt.get("kernel_width", c.kernel_width);
    c.n_max = pt.get("n_max", c.n_max);
    c.order = pt.get("order", c.order);
    c.window = pt.get("window", c.window);
    c.tolerance = pt.get("tolerance", c.tolerance);
    c.probes = pt.get("probes", c.probes);
    c.seed = pt.get("seed", c.seed);
    if (auto s = pt.get_optional<std::string>("subtraction")) c.subtraction = parse_bool("subtraction", *s);
    c.cap = pt.get("cap", c.cap);
    c.test_width = pt.get("test_width", c.test_width);
    c.cluster_dimension = pt.get("cluster_dimension", c.cluster_dimension);
    c.cluster_window = pt.get("cluster_window", c.cluster_window);
    c.thermal_check_n0 = pt.get("thermal_check_n0", c.thermal_check_n0);
  } catch (const boost::property_tree::ptree_error& e) {
    throw Error("config: " + std::string(e.what()));
  }
  c.occupation_spec();
  if (c.order < 0) throw Error("config: order must be nonnegative");
  if (c.n_max < 1) throw Error("config: n_max must be positive");
  if (!(c.window > 0.0)) throw Error("config: window must be positive");
  if (c.probes < 1) throw Error("config: probes must be positive");
  return c;
}

inline nlohmann::json to_json(const ModeGrid& g) {
  nlohmann::json modes = nlohmann::json::array();
  for (std::size_t i = 0; i < g.size(); ++i)
    modes.push_back({{"k", g.momentum(static_cast<int>(i))}, {"weight", g.weight(static_cast<int>(i))},
                     {"energy", g.energy(static_cast<int>(i))}});
  return {{"dimension", g.dimension()}, {"mu", g.mu()}, {"modes", modes}};
}

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"dimension", c.dimension},
          {"grid_points", c.grid_points},
          {"spacing", c.spacing},
          {"mu", c.mu},
          {"occupation", c.occupation},
          {"beta", c.beta},
          {"n0", c.n0},
          {"occupation_width", c.occupation_width},
          {"coupling", {c.coupling_re, c.coupling_im}},
          {"kernel_width", c.kernel_width},
          {"n_max", c.n_max},
          {"order", c.order},
          {"window", c.window},
          {"tolerance", c.tolerance},
          {"probes", c.probes},
          {"seed", c.seed},
          {"subtraction", c.subtraction},
          {"cap", c.cap},
          {"test_width", c.test_width},
          {"cluster_dimension", c.cluster_dimension},
          {"cluster_window", c.cluster_window},
          {"thermal_check_n0", c.thermal_check_n0},
          {"grid", to_json(c.grid())}};
}

}  // namespace nert
