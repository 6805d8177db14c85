#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ipfp/cost_kernel.hpp"
#include "ipfp/coupling.hpp"
#include "ipfp/error.hpp"
#include "ipfp/hilbert.hpp"
#include "ipfp/log_sum_exp.hpp"
#include "ipfp/matrix.hpp"
#include "ipfp/metric_measure.hpp"

namespace ipfp {

using WarningSink = std::function<void(const std::string&)>;

namespace detail {
inline WarningSink& warning_sink() {
  static WarningSink sink = [](const std::string& message) {
    std::cerr << "warning: " << message << '\n';
  };
  return sink;
}
}  // namespace detail

/// Replaces the warning handler (stderr by default). Returns the previous one.
inline WarningSink set_warning_sink(WarningSink sink) {
  return std::exchange(detail::warning_sink(), std::move(sink));
}

inline void warn(const std::string& message) {
  if (detail::warning_sink()) detail::warning_sink()(message);
}

/// Marginals, cost and Gibbs kernel of one Schrodinger bridge instance.
///
/// Atoms with zero marginal weight stay in the ambient space and are skipped
/// in every sum. Potentials are still defined on them.
class SchrodingerProblem {
 public:
  SchrodingerProblem(DiscreteMeasure pi0, DiscreteMeasure pi1, CostModel cost)
      : pi0_(std::move(pi0)), pi1_(std::move(pi1)), cost_(std::move(cost)), kernel_(cost_) {
    if (!same_space(pi0_.space_ptr(), cost_.space_x()) ||
        !same_space(pi1_.space_ptr(), cost_.space_y()))
      throw Error("marginals do not live on the cost's spaces");
    if (!pi0_.strictly_positive() || !pi1_.strictly_positive())
      warn("zero-weight atoms are excluded from the marginal supports");
  }

  const DiscreteMeasure& pi0() const { return pi0_; }
  const DiscreteMeasure& pi1() const { return pi1_; }
  const CostModel& cost() const { return cost_; }
  const KernelTable& kernel() const { return kernel_; }
  std::size_t nx() const { return cost_.rows(); }
  std::size_t ny() const { return cost_.cols(); }

 private:
  DiscreteMeasure pi0_;
  DiscreteMeasure pi1_;
  CostModel cost_;
  KernelTable kernel_;
};

/// Normalised log-potentials at step n: phi = log f_n with sum phi pi0 = 0,
/// psi = log g_n. log_a is log a_n, the running normalisation (log a_0 = 0).
struct PotentialPair {
  std::vector<double> phi;
  std::vector<double> psi;
  std::size_t n = 0;
  double log_a = 0.0;
};

inline PotentialPair initial_pair(const SchrodingerProblem& problem) {
  return {std::vector<double>(problem.nx(), 0.0), std::vector<double>(problem.ny(), 0.0), 0, 0.0};
}

namespace detail {

// L(x_i) = log sum_j exp(-c_ij + psi_j) pi1_j
inline std::vector<double> row_log_sums(const SchrodingerProblem& problem,
                                        std::span<const double> psi) {
  const auto& k = problem.kernel();
  const auto& pi1 = problem.pi1();
  std::vector<double> out(problem.nx());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = log_sum_exp_weighted(
        problem.ny(), [&](std::size_t j) { return pi1.weight(j); },
        [&](std::size_t j) { return k.log_kernel(i, j) + psi[j]; });
  return out;
}

inline double pi0_mean(const SchrodingerProblem& problem, std::span<const double> values) {
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (problem.pi0().weight(i) > 0.0) acc += values[i] * problem.pi0().weight(i);
  return acc;
}

inline void check_finite(std::span<const double> values, const char* what) {
  for (double v : values)
    if (!std::isfinite(v))
      throw Error(std::string("non-finite ") + what + " potential; the cost table is malformed");
}

inline void check_pair(const SchrodingerProblem& problem, const PotentialPair& pair) {
  if (pair.phi.size() != problem.nx() || pair.psi.size() != problem.ny())
    throw Error("potential pair does not match the problem");
}

}  // namespace detail

/// One IPFP round: (phi_n, psi_n) -> (phi_{n+1}, psi_{n+1}).
inline PotentialPair ipfp_step(const SchrodingerProblem& problem, const PotentialPair& pair) {
  detail::check_pair(problem, pair);
  const auto& k = problem.kernel();
  const auto& pi0 = problem.pi0();
  const auto big_l = detail::row_log_sums(problem, pair.psi);
  const double centre = detail::pi0_mean(problem, big_l);

  PotentialPair next;
  next.n = pair.n + 1;
  next.log_a = pair.log_a + centre;
  next.phi.resize(problem.nx());
  for (std::size_t i = 0; i < next.phi.size(); ++i) next.phi[i] = -big_l[i] + centre;
  next.psi.resize(problem.ny());
  for (std::size_t j = 0; j < next.psi.size(); ++j)
    next.psi[j] = -log_sum_exp_weighted(
        problem.nx(), [&](std::size_t i) { return pi0.weight(i); },
        [&](std::size_t i) { return k.log_kernel(i, j) + next.phi[i]; });
  detail::check_finite(next.phi, "phi");
  detail::check_finite(next.psi, "psi");
  if (!std::isfinite(next.log_a)) throw Error("non-finite normalisation constant");
  return next;
}

namespace detail {
inline Coupling coupling_from_logs(const SchrodingerProblem& problem, std::span<const double> a,
                                   std::span<const double> b, std::size_t step) {
  Matrix<double> w(problem.nx(), problem.ny());
  const auto& pi0 = problem.pi0();
  const auto& pi1 = problem.pi1();
  for (std::size_t i = 0; i < problem.nx(); ++i)
    for (std::size_t j = 0; j < problem.ny(); ++j)
      w(i, j) = pi0.weight(i) > 0.0 && pi1.weight(j) > 0.0
                    ? std::exp(a[i] + b[j] + problem.kernel().log_kernel(i, j)) * pi0.weight(i) *
                          pi1.weight(j)
                    : 0.0;
  return Coupling(problem.cost().space_x(), problem.cost().space_y(), std::move(w), step);
}
}  // namespace detail

/// P^{2n} = exp(phi_n + psi_n - c) pi0 x pi1. P^0 is the reference measure.
inline Coupling coupling_even(const SchrodingerProblem& problem, const PotentialPair& pair) {
  detail::check_pair(problem, pair);
  return detail::coupling_from_logs(problem, pair.phi, pair.psi, 2 * pair.n);
}

/// P^{2n+1} from phi_{n+1} (in `next`) and psi_n (in `prev`).
///
/// The tilde product f~_{n+1} g~_n equals exp(phi_{n+1} + psi_n) divided by
/// a_{n+1} / a_n, so the running normalisation is undone here.
inline Coupling coupling_odd(const SchrodingerProblem& problem, const PotentialPair& next,
                             const PotentialPair& prev) {
  detail::check_pair(problem, next);
  detail::check_pair(problem, prev);
  if (next.n != prev.n + 1) throw Error("coupling_odd needs consecutive potential pairs");
  std::vector<double> a(next.phi);
  const double shift = next.log_a - prev.log_a;
  for (double& v : a) v -= shift;
  return detail::coupling_from_logs(problem, a, prev.psi, 2 * prev.n + 1);
}

/// P^k for k >= 0 out of a trajectory holding pairs 0..ceil(k/2).
inline Coupling coupling_at(const SchrodingerProblem& problem,
                            std::span<const PotentialPair> trajectory, std::size_t k) {
  const std::size_t m = k / 2;
  if (k % 2 == 0) {
    if (m >= trajectory.size()) throw Error("trajectory too short for the requested step");
    return coupling_even(problem, trajectory[m]);
  }
  if (m + 1 >= trajectory.size()) throw Error("trajectory too short for the requested step");
  return coupling_odd(problem, trajectory[m + 1], trajectory[m]);
}

/// L1 distance between a coupling's axis marginal and `target`.
inline double marginal_error(const Coupling& coupling, const DiscreteMeasure& target, Axis axis) {
  const auto m = coupling.marginal(axis);
  if (m.size() != target.size()) throw Error("marginal_error: dimension mismatch");
  double err = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) err += std::abs(m[k] - target.weight(k));
  return err;
}

inline std::vector<PotentialPair> iterate(const SchrodingerProblem& problem, std::size_t steps) {
  std::vector<PotentialPair> out{initial_pair(problem)};
  out.reserve(steps + 1);
  for (std::size_t s = 0; s < steps; ++s) out.push_back(ipfp_step(problem, out.back()));
  return out;
}

inline double sup_norm(std::span<const double> values) {
  double out = 0.0;
  for (double v : values) out = std::max(out, std::abs(v));
  return out;
}

/// Diagnostics for pair n >= 1. marginal_err is the X-marginal L1 error of P^{2n}.
struct IterationDiagnostics {
  std::size_t n = 0;
  double marginal_err = 0.0;
  double dh_f_step = 0.0;  // d_H(f_n, f_{n-1})
  double dh_g_step = 0.0;  // d_H(g_n, g_{n-1})
  double phi_sup = 0.0;
  double psi_sup = 0.0;
  double phi_lip = 0.0;
  double psi_lip = 0.0;
};

struct IpfpRun {
  std::vector<PotentialPair> trajectory;  // pairs 0..iterations
  std::vector<IterationDiagnostics> diagnostics;
  bool converged = false;
  std::size_t iterations = 0;
  double final_error = std::numeric_limits<double>::infinity();
};

inline constexpr double kDefaultTolerance = 1e-10;

/// Iterates until the X-marginal error of P^{2n} drops below tol or n = max_iters.
/// Non-convergence is reported in the result, not thrown.
inline IpfpRun run_ipfp(const SchrodingerProblem& problem, std::size_t max_iters,
                        double tol = kDefaultTolerance) {
  if (max_iters < 1) throw Error("max_iters must be >= 1");
  if (!(tol >= 0.0)) throw Error("tol must be >= 0");
  IpfpRun run;
  run.trajectory.push_back(initial_pair(problem));
  for (std::size_t n = 1; n <= max_iters; ++n) {
    run.trajectory.push_back(ipfp_step(problem, run.trajectory.back()));
    const auto& cur = run.trajectory[n];
    const auto& prev = run.trajectory[n - 1];
    IterationDiagnostics d;
    d.n = n;
    d.marginal_err = marginal_error(coupling_even(problem, cur), problem.pi0(), Axis::x);
    d.dh_f_step = log_oscillation(cur.phi, prev.phi);
    d.dh_g_step = log_oscillation(cur.psi, prev.psi);
    d.phi_sup = sup_norm(cur.phi);
    d.psi_sup = sup_norm(cur.psi);
    d.phi_lip = discrete_lipschitz(cur.phi, *problem.cost().space_x());
    d.psi_lip = discrete_lipschitz(cur.psi, *problem.cost().space_y());
    run.diagnostics.push_back(d);
    run.iterations = n;
    run.final_error = d.marginal_err;
    if (d.marginal_err < tol) {
      run.converged = true;
      break;
    }
  }
  return run;
}

inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trajectory_csv(std::ostream& out, std::span<const IterationDiagnostics> rows) {
  out << "n,marginal_err,dH_f_step,dH_g_step,phi_sup,psi_sup,phi_lip,psi_lip\n";
  for (const auto& r : rows)
    out << r.n << ',' << format_double(r.marginal_err) << ',' << format_double(r.dh_f_step) << ','
        << format_double(r.dh_g_step) << ',' << format_double(r.phi_sup) << ','
        << format_double(r.psi_sup) << ',' << format_double(r.phi_lip) << ','
        << format_double(r.psi_lip) << '\n';
}

}  // namespace ipfp
