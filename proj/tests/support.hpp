#pragma once

// Shared fixtures: random instances and the small worked problems.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ipfp/cost_kernel.hpp"
#include "ipfp/ipfp.hpp"
#include "ipfp/metric_measure.hpp"
#include "ipfp/rng.hpp"

namespace support {

using namespace ipfp;

inline std::string source_path(const std::string& rel) { return std::string(IPFP_SOURCE_DIR) + "/" + rel; }

inline SpacePtr line(std::vector<double> xs) {
  std::vector<std::vector<double>> pts;
  for (double x : xs) pts.push_back({x});
  return make_space(FiniteMetricSpace::from_points(std::move(pts)));
}

inline SpacePtr random_points(Rng& rng, std::size_t n, std::size_t dim, double lo = 0.0, double hi = 1.0) {
  std::vector<std::vector<double>> pts(n, std::vector<double>(dim));
  for (auto& p : pts)
    for (double& v : p) v = rng.uniform(lo, hi);
  return make_space(FiniteMetricSpace::from_points(std::move(pts)));
}

// Strictly positive weights bounded away from zero.
inline DiscreteMeasure random_measure(Rng& rng, SpacePtr space) {
  std::vector<double> w(space->size());
  for (double& x : w) x = rng.uniform(0.2, 1.0);
  return DiscreteMeasure::normalized(std::move(space), std::move(w));
}

struct Instance {
  DiscreteMeasure pi0;
  DiscreteMeasure pi1;
  CostModel cost;
  SchrodingerProblem problem() const { return SchrodingerProblem(pi0, pi1, cost); }
};

// Random coordinate instance with |c|_inf equal to `sup_norm` and an analytic Lip(c).
// Quadratic and absolute costs alternate.
inline Instance random_instance(Rng& rng, std::size_t max_support, double sup_norm) {
  const std::size_t nx = 2 + rng.index(max_support - 1);
  const std::size_t ny = 2 + rng.index(max_support - 1);
  const std::size_t dim = 1 + rng.index(2);
  auto x = random_points(rng, nx, dim, -1.0, 1.0);
  auto y = random_points(rng, ny, dim, -1.0, 1.0);
  const bool quadratic = rng.uniform() < 0.5;
  double max_d = 0.0;
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j)
      max_d = std::max(max_d, FiniteMetricSpace::euclidean(x->point(i), y->point(j)));
  auto cost = quadratic ? quadratic_cost(x, y, max_d * max_d / sup_norm)
                        : absolute_cost(x, y, max_d / sup_norm);
  return {random_measure(rng, x), random_measure(rng, y), cost};
}

// X = Y = {0, 1}, c = |x - y|, uniform marginals unless given.
inline Instance two_point(std::vector<double> w0 = {0.5, 0.5}, std::vector<double> w1 = {0.5, 0.5}) {
  auto s = line({0.0, 1.0});
  return {DiscreteMeasure(s, w0), DiscreteMeasure(s, w1), absolute_cost(s, s, 1.0)};
}

// c = 0 on random supports.
inline Instance zero_cost(Rng& rng, std::size_t nx, std::size_t ny) {
  auto x = random_points(rng, nx, 2);
  auto y = random_points(rng, ny, 2);
  return {random_measure(rng, x), random_measure(rng, y),
          table_cost(x, y, Matrix<double>(nx, ny), 0.0)};
}

// c = 0 with power-of-two weights, whose sums are exact in double.
inline Instance zero_cost_dyadic() {
  auto x = line({0.0, 0.5, 1.0, 2.0});
  auto y = line({0.0, 1.0, 3.0});
  return {DiscreteMeasure(x, {0.5, 0.125, 0.125, 0.25}), DiscreteMeasure(y, {0.25, 0.25, 0.5}),
          table_cost(x, y, Matrix<double>(4, 3), 0.0)};
}

}  // namespace support
