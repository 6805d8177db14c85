// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ipfp/exact_w1.hpp"
#include "ipfp/hilbert.hpp"
#include "ipfp/ipfp.hpp"
#include "ipfp/stability.hpp"
#include "lp_enumeration.hpp"
#include "support.hpp"

using namespace ipfp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Suite shared by criteria 1-4: supports <= 20, |c|_inf <= 2.
std::vector<support::Instance> bridge_suite() {
  Rng rng(2024, "acceptance-suite");
  std::vector<support::Instance> out;
  for (int k = 0; k < 100; ++k) out.push_back(support::random_instance(rng, 20, rng.uniform(0.05, 2.0)));
  return out;
}

struct Paired {
  SchrodingerProblem problem;
  SchrodingerProblem perturbed;
};

// Suite shared by criteria 5-6: supports <= 12, both marginals perturbed on the same spaces.
std::vector<Paired> paired_suite() {
  Rng rng(2025, "acceptance-paired");
  std::vector<Paired> out;
  for (int k = 0; k < 50; ++k) {
    const auto inst = support::random_instance(rng, 12, rng.uniform(0.05, 2.0));
    const auto mode = k % 3 == 2 ? PerturbMode::empirical_subsample : PerturbMode::weight_jitter;
    const double magnitude = mode == PerturbMode::weight_jitter ? rng.uniform(0.01, 0.5) : 40.0;
    const auto a = perturb(inst.pi0, mode, magnitude, rng.next());
    const auto b = perturb(inst.pi1, mode, magnitude, rng.next());
    out.push_back({inst.problem(), SchrodingerProblem(a, b, inst.cost)});
  }
  return out;
}

Outcome half_bridge(const std::vector<support::Instance>& suite) {
  double worst = 0.0;
  for (const auto& inst : suite) {
    const auto problem = inst.problem();
    const auto traj = iterate(problem, 50);
    for (std::size_t k = 1; k <= 100; ++k) {
      const auto p = coupling_at(problem, traj, k);
      const double err = k % 2 == 1 ? marginal_error(p, inst.pi0, Axis::x)
                                    : marginal_error(p, inst.pi1, Axis::y);
      worst = std::max(worst, err);
    }
  }
  return {worst <= 1e-10, "max L1 error of the fixed marginal " + fmt(worst)};
}

Outcome potential_sup(const std::vector<support::Instance>& suite) {
  double worst = -1.0;
  for (const auto& inst : suite) {
    const auto problem = inst.problem();
    const double bound = 3.0 * inst.cost.sup_norm() + 1e-9;
    for (const auto& pair : iterate(problem, 50))
      worst = std::max(worst, std::max(sup_norm(pair.phi), sup_norm(pair.psi)) - bound);
  }
  return {worst <= 0.0, "max excess over 3|c| " + fmt(worst)};
}

Outcome potential_regularity(const std::vector<support::Instance>& suite) {
  std::size_t lip_bad = 0, sup_bad = 0, f_lip_bad = 0, checked = 0;
  for (const auto& inst : suite) {
    if (inst.cost.lip_source() != LipschitzSource::analytic) continue;
    const auto problem = inst.problem();
    const double lip = inst.cost.lip_const();
    const double cap = std::exp(3.0 * inst.cost.sup_norm());
    const auto& x = *inst.cost.space_x();
    const auto& y = *inst.cost.space_y();
    for (const auto& pair : iterate(problem, 50)) {
      ++checked;
      if (discrete_lipschitz(pair.phi, x) > lip + 1e-9 || discrete_lipschitz(pair.psi, y) > lip + 1e-9) ++lip_bad;
      if (std::exp(std::max(sup_norm(pair.phi), sup_norm(pair.psi))) > cap * (1 + 1e-9)) ++sup_bad;
      std::vector<double> f(pair.phi.size());
      std::transform(pair.phi.begin(), pair.phi.end(), f.begin(), [](double v) { return std::exp(v); });
      if (discrete_lipschitz(f, x) > lip * cap * (1 + 1e-9)) ++f_lip_bad;
    }
  }
  return {lip_bad + sup_bad + f_lip_bad == 0 && checked > 0,
          std::to_string(checked) + " potentials; Lip violations " + std::to_string(lip_bad) +
              ", sup violations " + std::to_string(sup_bad) + ", Lip(f) violations " + std::to_string(f_lip_bad)};
}

Outcome contraction(const std::vector<support::Instance>& suite) {
  Rng rng(2026, "acceptance-contraction");
  std::size_t pair_bad = 0, pairs = 0;
  for (const auto& inst : suite) {
    const KernelTable kernel(inst.cost);
    const double kappa = contraction_bound(inst.cost);
    for (Axis axis : {Axis::x, Axis::y}) {
      const auto& pi = axis == Axis::x ? inst.pi0 : inst.pi1;
      for (int s = 0; s < 1000; ++s) {
        std::vector<double> a(pi.size()), b(pi.size());
        for (double& v : a) v = rng.uniform(-3.0, 3.0);
        for (double& v : b) v = rng.uniform(-3.0, 3.0);
        const auto f = PositiveFunction::from_log(a), g = PositiveFunction::from_log(b);
        ++pairs;
        if (hilbert_metric(apply_kernel(kernel, f, pi, axis), apply_kernel(kernel, g, pi, axis)) >
            kappa * hilbert_metric(f, g) + 1e-9)
          ++pair_bad;
      }
    }
  }
  // Step decay anchored at d_H(f_1, f_0), on runs stopped at the default tolerance.
  std::size_t first_bad = 0, later_bad = 0;
  double worst_ratio = 0.0;
  for (const auto& inst : suite) {
    const auto problem = inst.problem();
    const double kappa = contraction_bound(inst.cost);
    const auto run = run_ipfp(problem, 200, kDefaultTolerance);
    const double anchor = run.diagnostics.front().dh_f_step;
    bool first = false, later = false;
    for (std::size_t n = 1; n < run.diagnostics.size(); ++n) {
      const double step = run.diagnostics[n].dh_f_step;
      const double bound = std::pow(kappa, static_cast<double>(n)) * anchor * (1 + 1e-9);
      if (step > bound) {
        (n == 1 ? first : later) = true;
        worst_ratio = std::max(worst_ratio, bound > 0.0 ? step / bound : INFINITY);
      }
    }
    first_bad += first;
    later_bad += later;
  }
  // Off-suite instance where f_1 is constant but f_2 is not: the anchored form fails at n=1.
  const auto off = support::two_point({1.0 / 3.0, 2.0 / 3.0}, {0.5, 0.5}).problem();
  const auto off_traj = iterate(off, 2);
  const double off_anchor = log_oscillation(off_traj[1].phi, off_traj[0].phi);
  const double off_step = log_oscillation(off_traj[2].phi, off_traj[1].phi);
  return {pair_bad == 0 && first_bad == 0 && later_bad == 0,
          "operator: " + std::to_string(pair_bad) + "/" + std::to_string(pairs) +
              " pairs exceed tanh(|c|); step decay: " + std::to_string(first_bad) +
              " instances exceed at n=1, " + std::to_string(later_bad) + " at n>=2, worst ratio " +
              fmt(worst_ratio) + "; note: off-suite two-point (1/3, 2/3) has d_H(f1,f0)=" + fmt(off_anchor) +
              " but d_H(f2,f1)=" + fmt(off_step)};
}

struct PairedTallies {
  std::size_t rows = 0, upper = 0, lower = 0, hilbert = 0, witness = 0, sup = 0;
  double min_slack3 = INFINITY;
};

PairedTallies run_paired(const std::vector<Paired>& suite) {
  PairedTallies t;
  for (const auto& pair : suite) {
    const auto report = run_stability_experiment(pair.problem, pair.perturbed, 50);
    const double w1 = report.w1_sum();
    const auto& cost = pair.problem.cost();
    const Bound c = theorem3_constant(cost);
    const Bound b3 = w1 == 0.0 ? Bound{} : Bound::from_log(c.log_value + std::log(w1));
    const Bound b15 = theorem15_bound(cost, w1), b16 = lemma16_bound(cost, w1), b17 = theorem17_bound(cost, w1);
    for (const auto& row : report.rows) {
      ++t.rows;
      t.upper += !Bound{c.value * w1, b3.log_value}.holds(row.w1_couplings);
      t.lower += row.w1_couplings < row.marginal_lower - kBoundTolerance;
      t.hilbert += !b15.holds(row.dh_fg);
      t.witness += !b16.holds(row.lem16_gap);
      t.sup += !b17.holds(row.sup_fg);
      t.min_slack3 = std::min(t.min_slack3, row.slack3);
    }
  }
  return t;
}

Outcome uniform_stability(const PairedTallies& t) {
  return {t.upper == 0 && t.lower == 0 && t.rows == 50 * 50,
          std::to_string(t.rows) + " rows; upper bound violations " + std::to_string(t.upper) +
              ", marginal lower bound violations " + std::to_string(t.lower) + ", min slack " +
              fmt(t.min_slack3)};
}

Outcome potential_stability(const PairedTallies& t) {
  return {t.hilbert + t.witness + t.sup == 0 && t.rows > 0,
          std::to_string(t.rows) + " rows; Hilbert " + std::to_string(t.hilbert) + ", witness gap " +
              std::to_string(t.witness) + ", sup-norm " + std::to_string(t.sup) + " violations"};
}

Outcome w1_oracle() {
  Rng rng(2027, "acceptance-lp");
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng.index(4), n = 1 + rng.index(4);
    const std::int64_t total = 1 + static_cast<std::int64_t>(rng.index(60));
    auto masses = [&](std::size_t k) {
      std::vector<std::int64_t> w(k, 0);
      for (std::int64_t unit = 0; unit < total; ++unit) ++w[rng.index(k)];
      return w;
    };
    const auto a = masses(m), b = masses(n);
    std::vector<std::int64_t> xs(m), ys(n);
    for (auto& v : xs) v = static_cast<std::int64_t>(rng.index(20));
    for (auto& v : ys) v = static_cast<std::int64_t>(rng.index(20));
    std::vector<std::vector<std::int64_t>> cost(m, std::vector<std::int64_t>(n));
    Matrix<double> dist(m, n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        cost[i][j] = std::abs(xs[i] - ys[j]);
        dist(i, j) = static_cast<double>(cost[i][j]);
      }
    if (solve_transport<std::int64_t>(a, b, dist).total_cost != static_cast<double>(lp_enum::optimum(a, b, cost)))
      ++mismatches;
  }
  std::size_t axiom_bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = support::random_points(rng, 2 + rng.index(10), 2);
    const auto a = support::random_measure(rng, s), b = support::random_measure(rng, s),
               c = support::random_measure(rng, s);
    const double ab = wasserstein1(a, b).value;
    if (ab <= 0.0 || std::abs(ab - wasserstein1(b, a).value) > 1e-10 ||
        wasserstein1(a, c).value > ab + wasserstein1(b, c).value + 1e-9 || wasserstein1(a, a).value != 0.0)
      ++axiom_bad;
  }
  return {mismatches == 0 && axiom_bad == 0, "LP mismatches " + std::to_string(mismatches) +
                                                 "/200, metric axiom failures " + std::to_string(axiom_bad) + "/100"};
}

Outcome worked_instance() {
  const auto problem = support::two_point().problem();
  const auto next = ipfp_step(problem, initial_pair(problem));
  const double psi1 = std::log(2.0) - std::log1p(std::exp(-1.0));
  const double diag = 1.0 / (2.0 * (1.0 + std::exp(-1.0)));
  const auto run = run_ipfp(problem, 50);
  const auto p = coupling_even(problem, run.trajectory.back());
  double err = 0.0;
  for (double v : next.psi) err = std::max(err, std::abs(v - psi1));
  err = std::max({err, std::abs(p(0, 0) - diag), std::abs(p(1, 1) - diag)});
  return {err <= 1e-12 && run.converged, "max deviation " + fmt(err)};
}

Outcome degenerate() {
  const auto inst = support::zero_cost_dyadic();
  const auto problem = inst.problem();
  bool exact = true;
  const auto traj = iterate(problem, 10);
  for (const auto& pair : traj) {
    for (double v : pair.phi) exact = exact && v == 0.0;
    for (double v : pair.psi) exact = exact && v == 0.0;
  }
  const auto p2 = coupling_at(problem, traj, 2);
  for (std::size_t i = 0; i < inst.pi0.size(); ++i)
    for (std::size_t j = 0; j < inst.pi1.size(); ++j) exact = exact && p2(i, j) == inst.pi0.weight(i) * inst.pi1.weight(j);
  const bool unit_c = theorem3_constant(inst.cost).value == 1.0;
  const DiscreteMeasure a(inst.pi0.space_ptr(), {0.25, 0.25, 0.25, 0.25});
  const DiscreteMeasure b(inst.pi1.space_ptr(), {0.5, 0.25, 0.25});
  const auto report = run_stability_experiment(problem, SchrodingerProblem(a, b, inst.cost), 20);
  const bool checks = report.violations.empty() && report.advisory_violations.empty();
  return {exact && unit_c && checks, std::string("potentials and product exact: ") + (exact ? "yes" : "no") +
                                         ", C = 1: " + (unit_c ? "yes" : "no") +
                                         ", stability violations " +
                                         std::to_string(report.violations.size() + report.advisory_violations.size())};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "ipfp_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::size_t runs = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(fs::path(IPFP_SOURCE_DIR) / "configs")) {
    const std::string text = slurp(entry.path());
    if (text.find("\"pi0\"") == std::string::npos) continue;  // measure files
    std::vector<std::string> commands = {"solve"};
    if (text.find("\"perturbation\"") != std::string::npos || text.find("\"pi0_hat\"") != std::string::npos)
      commands.push_back("stability");
    for (const auto& command : commands) {
      std::string outputs[2];
      int codes[2];
      for (int rep = 0; rep < 2; ++rep) {
        const fs::path out = dir / (entry.path().stem().string() + "_" + command + std::to_string(rep) + ".csv");
        const std::string cmd = std::string("\"") + IPFP_LAB_BINARY + "\" " + command + " --config \"" +
                                entry.path().string() + "\" --out \"" + out.string() + "\" > /dev/null 2>&1";
        codes[rep] = std::system(cmd.c_str());
        outputs[rep] = slurp(out);
      }
      ++runs;
      if (outputs[0].empty() || outputs[0] != outputs[1] || codes[0] != codes[1]) ++differing;
    }
  }
  fs::remove_all(dir);
  return {runs > 0 && differing == 0,
          std::to_string(runs) + " config/command pairs, " + std::to_string(differing) + " differ or empty"};
}

}  // namespace

int main() {
  set_warning_sink([](const std::string&) {});
  const auto start = std::chrono::steady_clock::now();
  int failures = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  };
  auto guarded = [](const std::function<Outcome()>& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("exception: ") + e.what()};
    }
  };

  const auto suite = bridge_suite();
  report(1, "half-bridge exactness", guarded([&] { return half_bridge(suite); }));
  report(2, "potential sup bound", guarded([&] { return potential_sup(suite); }));
  report(3, "potential Lipschitz and sup bounds", guarded([&] { return potential_regularity(suite); }));
  report(4, "Hilbert contraction and step decay", guarded([&] { return contraction(suite); }));
  PairedTallies tallies;
  const Outcome paired = guarded([&] {
    tallies = run_paired(paired_suite());
    return Outcome{};
  });
  report(5, "uniform W1 stability", paired.pass ? uniform_stability(tallies) : paired);
  report(6, "potential stability bounds", paired.pass ? potential_stability(tallies) : paired);
  report(7, "exact W1 oracle", guarded(w1_oracle));
  report(8, "two-point worked instance", guarded(worked_instance));
  report(9, "zero-cost sanity", guarded(degenerate));
  report(10, "deterministic CSV output", guarded(determinism));

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%d of 10 criteria failed (%.1f s)\n", failures, seconds);
  return failures == 0 ? 0 : 1;
}
