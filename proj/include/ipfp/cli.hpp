#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ipfp/cost_kernel.hpp"
#include "ipfp/error.hpp"
#include "ipfp/exact_w1.hpp"
#include "ipfp/ipfp.hpp"
#include "ipfp/metric_measure.hpp"
#include "ipfp/rng.hpp"
#include "ipfp/stability.hpp"

namespace ipfp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kInputError = 1, kNonConvergence = 2, kBoundViolation = 3 };

// ---------------------------------------------------------------- JSON input

inline void require_keys(const json& object, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!object.is_object()) throw Error(where + ": expected a JSON object");
  for (const auto& item : object.items())
    if (!allowed.count(item.key())) throw Error(where + ": unknown field '" + item.key() + "'");
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

template <class T>
T get_as(const json& value, const std::string& where) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw Error(where + ": wrong type");
  }
}

/// {"points": [[..], ..]} or {"distances": [[..], ..]}, optional "weights" (default uniform).
inline DiscreteMeasure measure_from_json(const json& doc, const std::string& where) {
  require_keys(doc, {"points", "distances", "weights"}, where);
  const bool has_points = doc.contains("points");
  if (has_points == doc.contains("distances"))
    throw Error(where + ": give exactly one of 'points' or 'distances'");
  SpacePtr space;
  if (has_points) {
    space = make_space(FiniteMetricSpace::from_points(
        get_as<std::vector<std::vector<double>>>(doc["points"], where + ".points")));
  } else {
    space = make_space(FiniteMetricSpace::from_distances(Matrix<double>::from_rows(
        get_as<std::vector<std::vector<double>>>(doc["distances"], where + ".distances"))));
  }
  if (!doc.contains("weights")) return DiscreteMeasure::uniform(space);
  return DiscreteMeasure(space, get_as<std::vector<double>>(doc["weights"], where + ".weights"));
}

inline DiscreteMeasure load_measure(const fs::path& path) {
  return measure_from_json(read_json(path), path.string());
}

inline json measure_to_json(const DiscreteMeasure& measure) {
  json doc;
  const auto& space = measure.space();
  if (space.has_coordinates()) {
    doc["points"] = space.points();
  } else {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < space.size(); ++i) {
      const auto r = space.distances().row(i);
      rows.emplace_back(r.begin(), r.end());
    }
    doc["distances"] = rows;
  }
  doc["weights"] = std::vector<double>(measure.weights().begin(), measure.weights().end());
  return doc;
}

// ------------------------------------------------------------ configuration

struct CostSpec {
  std::string type;  // quadratic | absolute | table
  double epsilon = 1.0;
  std::optional<Matrix<double>> table;
};

struct PerturbationSpec {
  PerturbMode mode = PerturbMode::weight_jitter;
  double magnitude = 0.0;
  std::uint64_t seed = 0;
  std::string apply_to = "pi0";  // pi0 | pi1 | both
};

struct ExperimentConfig {
  fs::path pi0;
  fs::path pi1;
  std::optional<fs::path> pi0_hat;
  std::optional<fs::path> pi1_hat;
  std::optional<PerturbationSpec> perturbation;
  CostSpec cost;
  std::size_t max_iters = 100;
  double tol = kDefaultTolerance;
  std::optional<fs::path> output;
  std::optional<double> lipschitz;
  bool bridge = false;
};

inline ExperimentConfig parse_config(const json& doc, const fs::path& base) {
  require_keys(doc, {"pi0", "pi1", "pi0_hat", "pi1_hat", "perturbation", "cost", "max_iters", "tol",
                     "output", "lipschitz", "bridge"},
               "config");
  auto path_field = [&](const char* key) {
    return base / get_as<std::string>(doc[key], std::string("config.") + key);
  };
  ExperimentConfig cfg;
  if (!doc.contains("pi0") || !doc.contains("pi1")) throw Error("config: 'pi0' and 'pi1' are required");
  cfg.pi0 = path_field("pi0");
  cfg.pi1 = path_field("pi1");
  if (doc.contains("pi0_hat")) cfg.pi0_hat = path_field("pi0_hat");
  if (doc.contains("pi1_hat")) cfg.pi1_hat = path_field("pi1_hat");
  if (doc.contains("perturbation")) {
    const auto& p = doc["perturbation"];
    require_keys(p, {"mode", "magnitude", "seed", "apply_to"}, "config.perturbation");
    PerturbationSpec spec;
    const auto mode = parse_perturb_mode(get_as<std::string>(p.value("mode", json()), "config.perturbation.mode"));
    if (!mode) throw Error("config.perturbation.mode: unknown mode");
    spec.mode = *mode;
    spec.magnitude = get_as<double>(p.value("magnitude", json()), "config.perturbation.magnitude");
    if (p.contains("seed")) spec.seed = get_as<std::uint64_t>(p["seed"], "config.perturbation.seed");
    if (p.contains("apply_to")) spec.apply_to = get_as<std::string>(p["apply_to"], "config.perturbation.apply_to");
    if (spec.apply_to != "pi0" && spec.apply_to != "pi1" && spec.apply_to != "both")
      throw Error("config.perturbation.apply_to: expected pi0, pi1 or both");
    cfg.perturbation = spec;
  }
  if (!doc.contains("cost")) throw Error("config: 'cost' is required");
  const auto& c = doc["cost"];
  require_keys(c, {"type", "epsilon", "table"}, "config.cost");
  cfg.cost.type = get_as<std::string>(c.value("type", json()), "config.cost.type");
  if (cfg.cost.type != "quadratic" && cfg.cost.type != "absolute" && cfg.cost.type != "table")
    throw Error("config.cost.type: expected quadratic, absolute or table");
  if (c.contains("epsilon")) cfg.cost.epsilon = get_as<double>(c["epsilon"], "config.cost.epsilon");
  if (cfg.cost.type == "table") {
    if (!c.contains("table")) throw Error("config.cost: table cost needs 'table'");
    cfg.cost.table = Matrix<double>::from_rows(
        get_as<std::vector<std::vector<double>>>(c["table"], "config.cost.table"));
  } else if (c.contains("table")) {
    throw Error("config.cost: 'table' only applies to table costs");
  }
  if (doc.contains("max_iters")) {
    const auto n = get_as<long long>(doc["max_iters"], "config.max_iters");
    if (n < 1) throw Error("config.max_iters must be >= 1");
    cfg.max_iters = static_cast<std::size_t>(n);
  }
  if (doc.contains("tol")) cfg.tol = get_as<double>(doc["tol"], "config.tol");
  if (!(cfg.tol >= 0.0)) throw Error("config.tol must be >= 0");
  if (doc.contains("output")) cfg.output = path_field("output");
  if (doc.contains("lipschitz")) cfg.lipschitz = get_as<double>(doc["lipschitz"], "config.lipschitz");
  if (doc.contains("bridge")) cfg.bridge = get_as<bool>(doc["bridge"], "config.bridge");
  return cfg;
}

inline ExperimentConfig load_config(const fs::path& path) {
  return parse_config(read_json(path), path.parent_path());
}

// ------------------------------------------------------------ problem setup

inline CostModel build_cost(const CostSpec& spec, SpacePtr x, SpacePtr y,
                            std::optional<double> lipschitz) {
  std::optional<CostModel> cost;
  if (spec.type == "quadratic") {
    cost = quadratic_cost(std::move(x), std::move(y), spec.epsilon);
  } else if (spec.type == "absolute") {
    cost = absolute_cost(std::move(x), std::move(y), spec.epsilon);
  } else {
    cost = table_cost(std::move(x), std::move(y), *spec.table);
  }
  if (lipschitz) return cost->with_lipschitz(*lipschitz);
  return *cost;
}

struct PairedProblems {
  SchrodingerProblem original;
  SchrodingerProblem perturbed;
};

// Puts two measures on one space (the union of their supports when they differ).
inline std::pair<DiscreteMeasure, DiscreteMeasure> align(const DiscreteMeasure& a,
                                                         const DiscreteMeasure& b) {
  if (same_space(a.space_ptr(), b.space_ptr())) return {a, DiscreteMeasure(a.space_ptr(), {b.weights().begin(), b.weights().end()})};
  const auto u = unite(a.space_ptr(), b.space_ptr());
  return {embed(a, u.space, u.first_index), embed(b, u.space, u.second_index)};
}

inline std::uint64_t marginal_seed(std::uint64_t seed, const char* which) {
  return stream_seed(seed, which);
}

inline PairedProblems build_paired(const ExperimentConfig& cfg) {
  const bool explicit_hat = cfg.pi0_hat || cfg.pi1_hat;
  if (explicit_hat == cfg.perturbation.has_value())
    throw Error("config: give exactly one of explicit pi0_hat/pi1_hat or a perturbation");
  const auto pi0 = load_measure(cfg.pi0);
  const auto pi1 = load_measure(cfg.pi1);
  DiscreteMeasure pi0_hat = cfg.pi0_hat ? load_measure(*cfg.pi0_hat) : pi0;
  DiscreteMeasure pi1_hat = cfg.pi1_hat ? load_measure(*cfg.pi1_hat) : pi1;
  if (cfg.perturbation) {
    const auto& p = *cfg.perturbation;
    if (p.apply_to != "pi1")
      pi0_hat = perturb(pi0, p.mode, p.magnitude, marginal_seed(p.seed, "pi0_hat"));
    if (p.apply_to != "pi0")
      pi1_hat = perturb(pi1, p.mode, p.magnitude, marginal_seed(p.seed, "pi1_hat"));
  }
  auto [a0, b0] = align(pi0, pi0_hat);
  auto [a1, b1] = align(pi1, pi1_hat);
  if (cfg.cost.type == "table" &&
      (!same_space(a0.space_ptr(), pi0.space_ptr()) || !same_space(a1.space_ptr(), pi1.space_ptr())))
    throw Error("a table cost cannot follow perturbed support points");
  const auto cost = build_cost(cfg.cost, a0.space_ptr(), a1.space_ptr(), cfg.lipschitz);
  return {SchrodingerProblem(a0, a1, cost), SchrodingerProblem(b0, b1, cost)};
}

// --------------------------------------------------------------- commands

struct Overrides {
  std::optional<fs::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_iters;
  std::optional<double> tol;
};

inline void apply(ExperimentConfig& cfg, const Overrides& o) {
  if (o.out) cfg.output = *o.out;
  if (o.seed && cfg.perturbation) cfg.perturbation->seed = *o.seed;
  if (o.max_iters) {
    if (*o.max_iters < 1) throw Error("--max-iters must be >= 1");
    cfg.max_iters = *o.max_iters;
  }
  if (o.tol) {
    if (!(*o.tol >= 0.0)) throw Error("--tol must be >= 0");
    cfg.tol = *o.tol;
  }
}

// Writes the whole buffer at once, so a failed run leaves no partial file.
inline void emit(const std::string& text, const std::optional<fs::path>& path, std::ostream& out) {
  if (!path) {
    out << text;
    return;
  }
  std::ofstream file(*path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error("cannot write " + path->string());
  file << text;
}

inline int cmd_solve(const fs::path& config_path, const Overrides& o, std::ostream& out,
                     std::ostream& err) {
  auto cfg = load_config(config_path);
  apply(cfg, o);
  const auto pi0 = load_measure(cfg.pi0);
  const auto pi1 = load_measure(cfg.pi1);
  const SchrodingerProblem problem(pi0, pi1,
                                   build_cost(cfg.cost, pi0.space_ptr(), pi1.space_ptr(), cfg.lipschitz));
  const auto run = run_ipfp(problem, cfg.max_iters, cfg.tol);
  std::ostringstream csv;
  write_trajectory_csv(csv, run.diagnostics);
  emit(csv.str(), cfg.output, out);
  if (!run.converged) {
    err << "not converged after " << run.iterations
        << " iterations (marginal error " << format_double(run.final_error) << ")\n";
    return kNonConvergence;
  }
  err << "converged after " << run.iterations << " iterations\n";
  return kOk;
}

inline int cmd_stability(const fs::path& config_path, const Overrides& o, std::ostream& out,
                         std::ostream& err) {
  auto cfg = load_config(config_path);
  apply(cfg, o);
  const auto pair = build_paired(cfg);
  auto report = run_stability_experiment(pair.original, pair.perturbed, cfg.max_iters);
  if (cfg.perturbation) {
    report.extra_header.emplace_back("perturbation", to_string(cfg.perturbation->mode));
    report.extra_header.emplace_back("magnitude", format_double(cfg.perturbation->magnitude));
    report.extra_header.emplace_back("seed", std::to_string(cfg.perturbation->seed));
  }
  bool bridge_ok = true;
  if (cfg.bridge) {
    const auto row = bridge_stability(pair.original, pair.perturbed, cfg.tol);
    report.extra_header.emplace_back("bridge_w1", format_double(row.w1_bridges));
    report.extra_header.emplace_back("bridge_bound", format_double(row.bound));
    report.extra_header.emplace_back("bridge_budget", format_double(row.budget));
    report.extra_header.emplace_back("bridge_iterations", std::to_string(row.iterations) + "/" +
                                                              std::to_string(row.iterations_hat));
    bridge_ok = row.holds;
    if (!row.holds) {
      const std::string msg = "bridge bound violated: W1=" + format_double(row.w1_bridges) +
                              " bound=" + format_double(row.bound);
      (report.advisory() ? report.advisory_violations : report.violations).push_back(msg);
      bridge_ok = report.advisory();
    }
  }
  std::ostringstream csv;
  write_stability_csv(csv, report);
  emit(csv.str(), cfg.output, out);
  for (const auto& v : report.advisory_violations) err << "advisory: " << v << '\n';
  if (!report.ok() || !bridge_ok) {
    for (const auto& v : report.violations) err << "violation: " << v << '\n';
    return kBoundViolation;
  }
  err << "all bounds hold over " << report.rows.size() << " steps"
      << (report.advisory() ? " (Lipschitz-dependent checks advisory)" : "") << '\n';
  return kOk;
}

inline int cmd_w1(const fs::path& mu_path, const fs::path& nu_path, const std::string& metric,
                  std::ostream& out) {
  auto mu = load_measure(mu_path);
  auto nu = load_measure(nu_path);
  if (metric == "euclidean") {
    if (!mu.space().has_coordinates() || !nu.space().has_coordinates())
      throw Error("--metric euclidean needs coordinate inputs");
    // Fresh copies so the cross-support path is taken even for equal point sets.
    mu = DiscreteMeasure(make_space(mu.space()), {mu.weights().begin(), mu.weights().end()});
  } else if (metric != "auto") {
    throw Error("--metric must be auto or euclidean");
  }
  const double value = metric == "euclidean" && same_space(mu.space_ptr(), nu.space_ptr())
                           ? wasserstein1_weights<double>(mu.weights(), nu.weights(),
                                                          mu.space().distances()).value
                           : wasserstein1(mu, nu).value;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12f\n", value);
  out << buf;
  return kOk;
}

inline int cmd_perturb(const fs::path& input, const std::string& mode_name, double magnitude,
                       std::uint64_t seed, const std::optional<fs::path>& out_path,
                       std::ostream& out) {
  const auto mode = parse_perturb_mode(mode_name);
  if (!mode) throw Error("--mode must be weight-jitter, empirical-subsample or point-jitter");
  const auto result = perturb(load_measure(input), *mode, magnitude, seed);
  emit(measure_to_json(result).dump() + "\n", out_path, out);
  return kOk;
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Entropic OT laboratory: IPFP trajectories, stability bounds and exact W1"};
  app.require_subcommand(1);

  std::string config;
  Overrides overrides;
  std::string out_path;
  std::uint64_t seed = 0;
  std::size_t max_iters = 0;
  double tol = 0.0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "experiment config (JSON)")->required();
    sub->add_option("--out", out_path, "output CSV path (overrides config)");
    sub->add_option("--seed", seed, "perturbation seed (overrides config)");
    sub->add_option("--max-iters", max_iters, "iteration cap (overrides config)");
    sub->add_option("--tol", tol, "marginal-error tolerance (overrides config)");
  };
  auto* solve = app.add_subcommand("solve", "run IPFP and write the trajectory CSV");
  add_common(solve);
  auto* stability = app.add_subcommand("stability", "paired runs with every stability bound checked");
  add_common(stability);

  auto* w1 = app.add_subcommand("w1", "exact Wasserstein-1 distance between two measure files");
  std::string mu_file, nu_file, metric = "auto";
  w1->add_option("mu", mu_file, "first measure (JSON)")->required();
  w1->add_option("nu", nu_file, "second measure (JSON)")->required();
  w1->add_option("--metric", metric, "auto or euclidean");

  auto* pert = app.add_subcommand("perturb", "write a seeded perturbation of a measure file");
  std::string input, mode = "weight-jitter";
  double magnitude = 0.0;
  std::uint64_t pert_seed = 0;
  pert->add_option("input", input, "measure (JSON)")->required();
  pert->add_option("--mode", mode, "weight-jitter, empirical-subsample or point-jitter");
  pert->add_option("--magnitude", magnitude, "jitter size, or sample count");
  pert->add_option("--seed", pert_seed, "random seed");
  pert->add_option("--out", out_path, "output path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  auto collect = [&](CLI::App* sub) {
    if (sub->count("--out")) overrides.out = out_path;
    if (sub->count("--seed")) overrides.seed = seed;
    if (sub->count("--max-iters")) overrides.max_iters = max_iters;
    if (sub->count("--tol")) overrides.tol = tol;
  };
  try {
    if (solve->parsed()) {
      collect(solve);
      return cmd_solve(config, overrides, out, err);
    }
    if (stability->parsed()) {
      collect(stability);
      return cmd_stability(config, overrides, out, err);
    }
    if (w1->parsed()) return cmd_w1(mu_file, nu_file, metric, out);
    std::optional<fs::path> target;
    if (pert->count("--out")) target = out_path;
    return cmd_perturb(input, mode, magnitude, pert_seed, target, out);
  } catch (const NonConvergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kNonConvergence;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
}

}  // namespace ipfp::cli
