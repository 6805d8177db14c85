#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include "ipfp/coupling.hpp"
#include "ipfp/error.hpp"
#include "ipfp/matrix.hpp"
#include "ipfp/metric_measure.hpp"
#include "ipfp/transport_simplex.hpp"

namespace ipfp {

// Exact Wasserstein-1 distances between finitely supported measures. This is
// the independent reference for every stability check, so it shares nothing
// with the entropic machinery: it solves the transport linear program exactly
// with the transportation simplex.

inline constexpr std::size_t kMaxTransportEdges = 1'000'000;
inline constexpr double kPruneMass = 1e-15;

template <class Mass>
struct PlanEntry {
  std::size_t source;
  std::size_t target;
  Mass mass;
};

/// Sparse optimal plan: mass moved from atom `source` of mu to atom `target` of nu.
template <class Mass>
struct BasicTransportPlan {
  std::size_t source_size = 0;
  std::size_t target_size = 0;
  std::vector<PlanEntry<Mass>> entries;
  double total_cost = 0.0;

  std::vector<double> source_sums() const {
    std::vector<double> out(source_size, 0.0);
    for (const auto& e : entries) out[e.source] += static_cast<double>(e.mass);
    return out;
  }
  std::vector<double> target_sums() const {
    std::vector<double> out(target_size, 0.0);
    for (const auto& e : entries) out[e.target] += static_cast<double>(e.mass);
    return out;
  }
  Matrix<double> dense() const {
    Matrix<double> out(source_size, target_size);
    for (const auto& e : entries) out(e.source, e.target) += static_cast<double>(e.mass);
    return out;
  }
};

using TransportPlan = BasicTransportPlan<double>;

template <class Mass>
struct BasicW1Result {
  double value = 0.0;
  BasicTransportPlan<Mass> plan;
};

using W1Result = BasicW1Result<double>;

namespace detail {

inline void check_edge_budget(std::size_t sources, std::size_t targets) {
  if (sources != 0 && targets > kMaxTransportEdges / sources)
    throw Error("W1 instance exceeds the desk-scale cap of 1e6 transport edges (" +
                std::to_string(sources) + " x " + std::to_string(targets) + ")");
}

template <class Mass>
BasicW1Result<Mass> solve_reduced(std::span<const Mass> supply, std::span<const Mass> demand,
                                  const Matrix<double>& cost,
                                  std::span<const std::size_t> source_atoms,
                                  std::span<const std::size_t> target_atoms,
                                  BasicTransportPlan<Mass> plan) {
  const auto solution = solve_transport<Mass>(supply, demand, cost);
  if constexpr (std::is_floating_point_v<Mass>) {
    double total = 0.0;
    for (Mass s : supply) total += s;
    const auto failure = verify_transport<Mass>(solution, supply, demand, cost,
                                                1e-10 * std::max(1.0, total));
    if (!failure.empty()) throw Error("W1 optimality certificate failed: " + failure);
  }
  for (const auto& cell : solution.basis)
    if (cell.flow > Mass{0})
      plan.entries.push_back({source_atoms[cell.row], target_atoms[cell.col], cell.flow});
  plan.total_cost += solution.total_cost;
  BasicW1Result<Mass> out;
  out.value = std::max(0.0, plan.total_cost);
  out.plan = std::move(plan);
  return out;
}

}  // namespace detail

/// W1 between two mass vectors on one metric space with distance table `dist`.
///
/// Mass shared by mu and nu at an atom stays in place (W1 depends only on
/// mu - nu for a metric cost), so the simplex only sees the positive and negative
/// parts of the difference. Floating-point differences below 1e-15 are pruned.
template <class Mass>
BasicW1Result<Mass> wasserstein1_weights(std::span<const Mass> mu, std::span<const Mass> nu,
                                         const Matrix<double>& dist) {
  const std::size_t n = mu.size();
  if (nu.size() != n || dist.rows() != n || dist.cols() != n)
    throw Error("W1: measures and distance table disagree in size");
  const Mass prune = std::is_floating_point_v<Mass> ? static_cast<Mass>(kPruneMass) : Mass{0};
  BasicTransportPlan<Mass> plan;
  plan.source_size = n;
  plan.target_size = n;
  std::vector<std::size_t> sources, targets;
  std::vector<Mass> supply, demand;
  for (std::size_t i = 0; i < n; ++i) {
    const Mass shared = std::min(mu[i], nu[i]);
    if (shared > Mass{0}) plan.entries.push_back({i, i, shared});
    if (mu[i] - nu[i] > prune) {
      sources.push_back(i);
      supply.push_back(mu[i] - nu[i]);
    } else if (nu[i] - mu[i] > prune) {
      targets.push_back(i);
      demand.push_back(nu[i] - mu[i]);
    }
  }
  if (sources.empty() || targets.empty()) {
    BasicW1Result<Mass> out;
    out.plan = std::move(plan);
    return out;
  }
  detail::check_edge_budget(sources.size(), targets.size());
  Matrix<double> cost(sources.size(), targets.size());
  for (std::size_t a = 0; a < sources.size(); ++a)
    for (std::size_t b = 0; b < targets.size(); ++b) cost(a, b) = dist(sources[a], targets[b]);
  return detail::solve_reduced<Mass>(supply, demand, cost, sources, targets, std::move(plan));
}

/// W1 between measures. Same space: the space's metric. Different coordinate
/// spaces of equal dimension: Euclidean distance across the two supports.
inline W1Result wasserstein1(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  if (same_space(mu.space_ptr(), nu.space_ptr()))
    return wasserstein1_weights<double>(mu.weights(), nu.weights(), mu.space().distances());
  const auto& a = mu.space();
  const auto& b = nu.space();
  if (!a.has_coordinates() || !b.has_coordinates() || a.dimension() != b.dimension())
    throw Error("metric undefined across supports: need one space, or coordinates of equal "
                "dimension");
  std::vector<std::size_t> sources, targets;
  std::vector<double> supply, demand;
  for (std::size_t i = 0; i < mu.size(); ++i)
    if (mu.weight(i) > kPruneMass) {
      sources.push_back(i);
      supply.push_back(mu.weight(i));
    }
  for (std::size_t j = 0; j < nu.size(); ++j)
    if (nu.weight(j) > kPruneMass) {
      targets.push_back(j);
      demand.push_back(nu.weight(j));
    }
  detail::check_edge_budget(sources.size(), targets.size());
  Matrix<double> cost(sources.size(), targets.size());
  for (std::size_t s = 0; s < sources.size(); ++s)
    for (std::size_t t = 0; t < targets.size(); ++t)
      cost(s, t) = FiniteMetricSpace::euclidean(a.point(sources[s]), b.point(targets[t]));
  TransportPlan plan;
  plan.source_size = mu.size();
  plan.target_size = nu.size();
  return detail::solve_reduced<double>(supply, demand, cost, sources, targets, std::move(plan));
}

/// W1 between two couplings on the same X x Y grid under the sum metric
/// d_X + d_Y. Plan atoms are flattened grid indices i * |Y| + j.
inline W1Result wasserstein1_coupling(const Coupling& p, const Coupling& q) {
  if (!same_space(p.space_x(), q.space_x()) || !same_space(p.space_y(), q.space_y()))
    throw Error("W1 between couplings on different spaces");
  const auto metric = product_metric(p.space_x(), p.space_y());
  const std::size_t ny = p.weights().cols();
  const std::size_t atoms = p.weights().size();
  const auto pw = p.weights().data();
  const auto qw = q.weights().data();
  TransportPlan plan;
  plan.source_size = atoms;
  plan.target_size = atoms;
  std::vector<std::size_t> sources, targets;
  std::vector<double> supply, demand;
  for (std::size_t a = 0; a < atoms; ++a) {
    const double pa = pw[a] > kPruneMass ? pw[a] : 0.0;
    const double qa = qw[a] > kPruneMass ? qw[a] : 0.0;
    const double shared = std::min(pa, qa);
    if (shared > 0.0) plan.entries.push_back({a, a, shared});
    if (pa - qa > kPruneMass) {
      sources.push_back(a);
      supply.push_back(pa - qa);
    } else if (qa - pa > kPruneMass) {
      targets.push_back(a);
      demand.push_back(qa - pa);
    }
  }
  if (sources.empty() || targets.empty()) return W1Result{0.0, std::move(plan)};
  detail::check_edge_budget(sources.size(), targets.size());
  Matrix<double> cost(sources.size(), targets.size());
  for (std::size_t s = 0; s < sources.size(); ++s)
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const std::size_t a = sources[s], b = targets[t];
      cost(s, t) = metric(a / ny, a % ny, b / ny, b % ny);
    }
  return detail::solve_reduced<double>(supply, demand, cost, sources, targets, std::move(plan));
}

}  // namespace ipfp
