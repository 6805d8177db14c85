#pragma once

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "ipfp/cost_kernel.hpp"
#include "ipfp/coupling.hpp"
#include "ipfp/error.hpp"
#include "ipfp/exact_w1.hpp"
#include "ipfp/hilbert.hpp"
#include "ipfp/ipfp.hpp"

namespace ipfp {

// Paired IPFP runs on (pi0, pi1) and (pi0_hat, pi1_hat) over the same spaces and
// cost, with every observed distance checked against its stability bound.

inline constexpr double kBoundTolerance = 1e-9;
// Above this log-magnitude, comparisons happen in log space.
inline constexpr double kLogCompareThreshold = 700.0;

/// A nonnegative bound carried both as a value and as its logarithm.
struct Bound {
  double value = 0.0;
  double log_value = -std::numeric_limits<double>::infinity();

  static Bound from_log(double log_value) {
    Bound b;
    b.log_value = log_value;
    b.value = log_value > kLogCompareThreshold ? std::numeric_limits<double>::infinity()
                                               : std::exp(log_value);
    return b;
  }

  bool holds(double observed, double tolerance = kBoundTolerance) const {
    if (observed <= tolerance) return true;
    if (log_value > kLogCompareThreshold) return std::log(observed) <= log_value;
    return observed <= value + tolerance;
  }

  /// bound / observed; +inf when nothing was observed.
  double slack(double observed) const {
    if (observed <= 0.0) return std::numeric_limits<double>::infinity();
    if (log_value > kLogCompareThreshold) return std::exp(log_value - std::log(observed));
    return value / observed;
  }
};

namespace detail {
// log(factor * lip * exp(rate * c) * w), with zeros mapping to -inf.
inline double log_linear_bound(double factor, double lip, double rate, double c, double w) {
  if (lip == 0.0 || w == 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(factor) + std::log(lip) + rate * c + std::log(w);
}

inline Bound linear_bound(double factor, double lip, double rate, double c, double w) {
  const double log_value = log_linear_bound(factor, lip, rate, c, w);
  if (log_value > kLogCompareThreshold || std::isinf(log_value)) return Bound::from_log(log_value);
  return {factor * lip * std::exp(rate * c) * w, log_value};
}
}  // namespace detail

/// C = e^{17 |c|} (1 + 15 Lip(c) (dX + dY)).
inline Bound theorem3_constant(double sup_norm, double lip, double dx, double dy) {
  if (dx < 0.0 || dy < 0.0) throw Error("diameters must be >= 0");
  const double log_value = 17.0 * sup_norm + std::log1p(15.0 * lip * (dx + dy));
  if (log_value > kLogCompareThreshold) return Bound::from_log(log_value);
  return {std::exp(17.0 * sup_norm) * (1.0 + 15.0 * lip * (dx + dy)), log_value};
}

inline Bound theorem3_constant(const CostModel& cost) {
  return theorem3_constant(cost.sup_norm(), cost.lip_const(), cost.space_x()->diameter(),
                           cost.space_y()->diameter());
}

/// 8 Lip(c) e^{10 |c|} w1_sum
inline Bound theorem15_bound(double sup_norm, double lip, double w1_sum) {
  return detail::linear_bound(8.0, lip, 10.0, sup_norm, w1_sum);
}
inline Bound theorem15_bound(const CostModel& cost, double w1_sum) {
  return theorem15_bound(cost.sup_norm(), cost.lip_const(), w1_sum);
}

/// 4 Lip(c) e^{10 |c|} w1_sum
inline Bound lemma16_bound(double sup_norm, double lip, double w1_sum) {
  return detail::linear_bound(4.0, lip, 10.0, sup_norm, w1_sum);
}
inline Bound lemma16_bound(const CostModel& cost, double w1_sum) {
  return lemma16_bound(cost.sup_norm(), cost.lip_const(), w1_sum);
}

/// 12 Lip(c) e^{16 |c|} w1_sum
inline Bound theorem17_bound(double sup_norm, double lip, double w1_sum) {
  return detail::linear_bound(12.0, lip, 16.0, sup_norm, w1_sum);
}
inline Bound theorem17_bound(const CostModel& cost, double w1_sum) {
  return theorem17_bound(cost.sup_norm(), cost.lip_const(), w1_sum);
}

/// Observed quantities and bounds at step k (coupling P^k, potentials of pair ceil(k/2)).
struct StabilityRow {
  std::size_t n = 0;
  double w1_couplings = 0.0;
  double thm3_bound = 0.0;
  double dh_fg = 0.0;
  double thm15_bound = 0.0;
  double sup_fg = 0.0;
  double thm17_bound = 0.0;
  double lem16_gap = 0.0;
  double lem16_bound = 0.0;
  double w1_marginals_sum = 0.0;
  double slack3 = 0.0;
  double slack15 = 0.0;
  double slack17 = 0.0;
  double marginal_lower = 0.0;  // max W1 between the couplings' own marginals
};

struct StabilityReport {
  double c_constant = 0.0;
  double log_c_constant = 0.0;
  double lip = 0.0;
  LipschitzSource lip_source = LipschitzSource::analytic;
  double sup_norm = 0.0;
  double diameter_x = 0.0;
  double diameter_y = 0.0;
  double w1_pi0 = 0.0;
  double w1_pi1 = 0.0;
  std::vector<std::pair<std::string, std::string>> extra_header;  // e.g. seeds
  std::vector<StabilityRow> rows;
  std::vector<std::string> violations;           // hard failures
  std::vector<std::string> advisory_violations;  // Lip-dependent, discrete-estimate Lip

  double w1_sum() const { return w1_pi0 + w1_pi1; }
  bool advisory() const { return lip_source == LipschitzSource::discrete_estimate; }
  bool ok() const { return violations.empty(); }
};

namespace detail {

inline void check_paired(const SchrodingerProblem& a, const SchrodingerProblem& b) {
  if (!same_space(a.cost().space_x(), b.cost().space_x()) ||
      !same_space(a.cost().space_y(), b.cost().space_y()))
    throw Error("paired problems must share their spaces");
  if (!(a.cost().table() == b.cost().table())) throw Error("paired problems must share the cost");
}

inline double w1_measures(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  return wasserstein1_weights<double>(mu.weights(), nu.weights(), mu.space().distances()).value;
}

struct PotentialGaps {
  double dh = 0.0;
  double sup = 0.0;
  double gap = std::numeric_limits<double>::infinity();
};

inline PotentialGaps potential_gaps(const PotentialPair& p, const PotentialPair& q) {
  PotentialGaps out;
  double hi = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.phi.size(); ++i)
    for (std::size_t j = 0; j < p.psi.size(); ++j) {
      const double a = p.phi[i] + p.psi[j];
      const double b = q.phi[i] + q.psi[j];
      hi = std::max(hi, a - b);
      lo = std::min(lo, a - b);
      out.sup = std::max(out.sup, std::abs(std::exp(a) - std::exp(b)));
      out.gap = std::min(out.gap, std::abs(std::expm1(a - b)));
    }
  out.dh = hi - lo;
  return out;
}

inline std::string describe(const char* what, std::size_t n, double observed, double bound) {
  return std::string(what) + " violated at n=" + std::to_string(n) +
         ": observed=" + format_double(observed) + " bound=" + format_double(bound);
}

}  // namespace detail

/// Runs both problems for `iters` coupling steps (P^1 .. P^iters) and checks, per step:
/// W1(P^n, P_hat^n) <= C w1_sum, the three potential bounds, and the marginal lower bound.
inline StabilityReport run_stability_experiment(const SchrodingerProblem& problem,
                                                const SchrodingerProblem& perturbed,
                                                std::size_t iters) {
  if (iters < 1) throw Error("iters must be >= 1");
  detail::check_paired(problem, perturbed);
  const auto& cost = problem.cost();
  const std::size_t pairs = (iters + 1) / 2;

  auto hat_future = std::async(std::launch::async, [&] { return iterate(perturbed, pairs); });
  const auto traj = iterate(problem, pairs);
  const auto traj_hat = hat_future.get();

  StabilityReport report;
  const Bound c = theorem3_constant(cost);
  report.c_constant = c.value;
  report.log_c_constant = c.log_value;
  report.lip = cost.lip_const();
  report.lip_source = cost.lip_source();
  report.sup_norm = cost.sup_norm();
  report.diameter_x = cost.space_x()->diameter();
  report.diameter_y = cost.space_y()->diameter();
  report.w1_pi0 = detail::w1_measures(problem.pi0(), perturbed.pi0());
  report.w1_pi1 = detail::w1_measures(problem.pi1(), perturbed.pi1());

  const double w1_sum = report.w1_sum();
  const Bound b3 = w1_sum == 0.0 ? Bound{} : Bound::from_log(c.log_value + std::log(w1_sum));
  const Bound b3_exact = c.log_value > kLogCompareThreshold ? b3 : Bound{c.value * w1_sum, b3.log_value};
  const Bound b15 = theorem15_bound(cost, w1_sum);
  const Bound b16 = lemma16_bound(cost, w1_sum);
  const Bound b17 = theorem17_bound(cost, w1_sum);
  auto& lip_bucket = report.advisory() ? report.advisory_violations : report.violations;
  const auto& dx = cost.space_x()->distances();
  const auto& dy = cost.space_y()->distances();

  for (std::size_t k = 1; k <= iters; ++k) {
    const auto p = coupling_at(problem, traj, k);
    const auto q = coupling_at(perturbed, traj_hat, k);
    const std::size_t m = (k + 1) / 2;
    const auto gaps = detail::potential_gaps(traj[m], traj_hat[m]);

    StabilityRow row;
    row.n = k;
    row.w1_couplings = wasserstein1_coupling(p, q).value;
    row.thm3_bound = b3_exact.value;
    row.dh_fg = gaps.dh;
    row.thm15_bound = b15.value;
    row.sup_fg = gaps.sup;
    row.thm17_bound = b17.value;
    row.lem16_gap = gaps.gap;
    row.lem16_bound = b16.value;
    row.w1_marginals_sum = w1_sum;
    row.slack3 = b3_exact.slack(row.w1_couplings);
    row.slack15 = b15.slack(row.dh_fg);
    row.slack17 = b17.slack(row.sup_fg);
    row.marginal_lower = std::max(
        wasserstein1_weights<double>(p.marginal(Axis::x), q.marginal(Axis::x), dx).value,
        wasserstein1_weights<double>(p.marginal(Axis::y), q.marginal(Axis::y), dy).value);

    if (!b3_exact.holds(row.w1_couplings))
      lip_bucket.push_back(detail::describe("W1 coupling bound", k, row.w1_couplings, row.thm3_bound));
    if (!b15.holds(row.dh_fg))
      lip_bucket.push_back(detail::describe("Hilbert potential bound", k, row.dh_fg, row.thm15_bound));
    if (!b17.holds(row.sup_fg))
      lip_bucket.push_back(detail::describe("sup-norm potential bound", k, row.sup_fg, row.thm17_bound));
    if (!b16.holds(row.lem16_gap))
      lip_bucket.push_back(detail::describe("witness gap bound", k, row.lem16_gap, row.lem16_bound));
    if (row.w1_couplings < row.marginal_lower - kBoundTolerance)
      report.violations.push_back(
          detail::describe("marginal lower bound", k, row.w1_couplings, row.marginal_lower));
    report.rows.push_back(row);
  }
  return report;
}

struct BridgeRow {
  double w1_bridges = 0.0;
  double bound = 0.0;   // C * w1_sum
  double budget = 0.0;  // truncation allowance for stopping both runs early
  std::size_t iterations = 0;
  std::size_t iterations_hat = 0;
  bool holds = true;
  double slack = 0.0;
};

namespace detail {
// W1 allowance between the stopped even iterate P^{2N} and the limit.
// D = d_H(f_{N+1}, f_N) from one extra step; from there on f steps shrink by
// kappa^2 and g steps by kappa relative to f, so the log-density ratio of the two
// unit-mass couplings oscillates by at most D / (1 - kappa).
inline double truncation_budget(const SchrodingerProblem& problem, const IpfpRun& run) {
  const auto& cost = problem.cost();
  const double kappa = contraction_bound(cost);
  const double diam = cost.space_x()->diameter() + cost.space_y()->diameter();
  if (kappa >= 1.0) return std::numeric_limits<double>::infinity();
  const auto& last = run.trajectory.back();
  const auto next = ipfp_step(problem, last);
  const double delta = log_oscillation(next.phi, last.phi) / (1.0 - kappa);
  return 0.5 * diam * std::expm1(delta) + diam * run.final_error;
}
}  // namespace detail

/// Runs both problems to convergence below tol and compares the limiting couplings.
inline BridgeRow bridge_stability(const SchrodingerProblem& problem,
                                  const SchrodingerProblem& perturbed, double tol,
                                  std::size_t max_iters = 1000) {
  detail::check_paired(problem, perturbed);
  auto hat_future =
      std::async(std::launch::async, [&] { return run_ipfp(perturbed, max_iters, tol); });
  const auto run = run_ipfp(problem, max_iters, tol);
  const auto run_hat = hat_future.get();
  if (!run.converged || !run_hat.converged)
    throw NonConvergenceError("bridge_stability: IPFP did not reach tol within " +
                              std::to_string(max_iters) + " iterations");
  const auto p = coupling_even(problem, run.trajectory.back());
  const auto q = coupling_even(perturbed, run_hat.trajectory.back());
  const double w1_sum = detail::w1_measures(problem.pi0(), perturbed.pi0()) +
                        detail::w1_measures(problem.pi1(), perturbed.pi1());
  const Bound c = theorem3_constant(problem.cost());
  const Bound bound = w1_sum == 0.0 ? Bound{} : Bound::from_log(c.log_value + std::log(w1_sum));

  BridgeRow row;
  row.w1_bridges = wasserstein1_coupling(p, q).value;
  row.bound = c.log_value > kLogCompareThreshold ? bound.value : c.value * w1_sum;
  row.budget = detail::truncation_budget(problem, run) + detail::truncation_budget(perturbed, run_hat);
  row.iterations = run.iterations;
  row.iterations_hat = run_hat.iterations;
  row.holds = Bound{row.bound, bound.log_value}.holds(std::max(0.0, row.w1_bridges - row.budget));
  row.slack = Bound{row.bound, bound.log_value}.slack(row.w1_bridges);
  return row;
}

inline void write_stability_csv(std::ostream& out, const StabilityReport& report) {
  out << "# C=" << format_double(report.c_constant) << '\n'
      << "# log_C=" << format_double(report.log_c_constant) << '\n'
      << "# lip=" << format_double(report.lip) << '\n'
      << "# lip_source=" << to_string(report.lip_source) << '\n'
      << "# advisory=" << (report.advisory() ? "true" : "false") << '\n'
      << "# cost_sup=" << format_double(report.sup_norm) << '\n'
      << "# diameter_x=" << format_double(report.diameter_x) << '\n'
      << "# diameter_y=" << format_double(report.diameter_y) << '\n'
      << "# w1_pi0=" << format_double(report.w1_pi0) << '\n'
      << "# w1_pi1=" << format_double(report.w1_pi1) << '\n';
  for (const auto& [key, value] : report.extra_header) out << "# " << key << '=' << value << '\n';
  out << "n,w1_couplings,thm3_bound,dh_fg,thm15_bound,sup_fg,thm17_bound,lem16_gap,lem16_bound,"
         "w1_marginals_sum,slack3,slack15,slack17\n";
  for (const auto& r : report.rows)
    out << r.n << ',' << format_double(r.w1_couplings) << ',' << format_double(r.thm3_bound) << ','
        << format_double(r.dh_fg) << ',' << format_double(r.thm15_bound) << ','
        << format_double(r.sup_fg) << ',' << format_double(r.thm17_bound) << ','
        << format_double(r.lem16_gap) << ',' << format_double(r.lem16_bound) << ','
        << format_double(r.w1_marginals_sum) << ',' << format_double(r.slack3) << ','
        << format_double(r.slack15) << ',' << format_double(r.slack17) << '\n';
}

}  // namespace ipfp
