#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ipfp/error.hpp"
#include "ipfp/matrix.hpp"
#include "ipfp/rng.hpp"

namespace ipfp {

/// When to check the triangle inequality of an explicit distance table.
enum class TableCheck { automatic, always, never };

/// A finite metric space, given either by Euclidean coordinates or by an
/// explicit symmetric distance table. The full distance table is materialised
/// in both modes.
class FiniteMetricSpace {
 public:
  static constexpr std::size_t kAutoTriangleCheckLimit = 64;
  static constexpr double kTableTolerance = 1e-9;

  static FiniteMetricSpace from_points(std::vector<std::vector<double>> points) {
    if (points.empty()) throw Error("metric space needs at least one point");
    const std::size_t dim = points.front().size();
    if (dim == 0) throw Error("points must have at least one coordinate");
    for (const auto& p : points) {
      if (p.size() != dim) throw Error("all points must share one dimension");
      for (double v : p)
        if (!std::isfinite(v)) throw Error("point coordinates must be finite");
    }
    FiniteMetricSpace space;
    space.dimension_ = dim;
    space.coordinates_ = std::move(points);
    const std::size_t n = space.coordinates_.size();
    space.distances_ = Matrix<double>(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double d = euclidean(space.coordinates_[i], space.coordinates_[j]);
        space.distances_(i, j) = d;
        space.distances_(j, i) = d;
      }
    space.finish();
    return space;
  }

  static FiniteMetricSpace from_distances(Matrix<double> table,
                                          TableCheck check = TableCheck::automatic) {
    const std::size_t n = table.rows();
    if (n == 0) throw Error("metric space needs at least one point");
    if (table.cols() != n) throw Error("distance table must be square");
    for (std::size_t i = 0; i < n; ++i) {
      if (table(i, i) != 0.0) throw Error("distance table must have a zero diagonal");
      for (std::size_t j = 0; j < n; ++j) {
        const double d = table(i, j);
        if (!std::isfinite(d) || d < 0.0) throw Error("distances must be finite and nonnegative");
        if (d != table(j, i)) throw Error("distance table must be symmetric");
      }
    }
    const bool validate = check == TableCheck::always ||
                          (check == TableCheck::automatic && n <= kAutoTriangleCheckLimit);
    if (validate) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t k = 0; k < n; ++k)
            if (table(i, j) > table(i, k) + table(k, j) + kTableTolerance)
              throw Error("distance table violates the triangle inequality at (" +
                          std::to_string(i) + ", " + std::to_string(j) + ") via " +
                          std::to_string(k));
    }
    FiniteMetricSpace space;
    space.distances_ = std::move(table);
    space.finish();
    return space;
  }

  std::size_t size() const { return distances_.rows(); }
  bool has_coordinates() const { return !coordinates_.empty(); }
  std::size_t dimension() const { return dimension_; }
  std::span<const double> point(std::size_t i) const { return coordinates_.at(i); }
  const std::vector<std::vector<double>>& points() const { return coordinates_; }

  double distance(std::size_t i, std::size_t j) const { return distances_(i, j); }
  const Matrix<double>& distances() const { return distances_; }
  double diameter() const { return diameter_; }

  friend bool operator==(const FiniteMetricSpace& a, const FiniteMetricSpace& b) {
    if (a.has_coordinates() != b.has_coordinates()) return false;
    if (a.has_coordinates()) return a.coordinates_ == b.coordinates_;
    return a.distances_ == b.distances_;
  }

  static double euclidean(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = a[k] - b[k];
      acc += d * d;
    }
    return std::sqrt(acc);
  }

 private:
  FiniteMetricSpace() = default;

  void finish() {
    diameter_ = 0.0;
    for (double d : distances_.data()) diameter_ = std::max(diameter_, d);
  }

  std::size_t dimension_ = 0;
  std::vector<std::vector<double>> coordinates_;
  Matrix<double> distances_;
  double diameter_ = 0.0;
};

using SpacePtr = std::shared_ptr<const FiniteMetricSpace>;

inline SpacePtr make_space(FiniteMetricSpace space) {
  return std::make_shared<const FiniteMetricSpace>(std::move(space));
}

/// Largest pairwise distance; 0 for a single point.
inline double diameter(const FiniteMetricSpace& space) { return space.diameter(); }

inline bool same_space(const SpacePtr& a, const SpacePtr& b) {
  return a == b || (a && b && *a == *b);
}

/// Probability weights over the points of a space.
class DiscreteMeasure {
 public:
  static constexpr double kMassTolerance = 1e-12;

  DiscreteMeasure(SpacePtr space, std::vector<double> weights)
      : space_(std::move(space)), weights_(std::move(weights)) {
    if (!space_) throw Error("measure needs a space");
    if (weights_.size() != space_->size())
      throw Error("measure has " + std::to_string(weights_.size()) + " weights for " +
                  std::to_string(space_->size()) + " points");
    double total = 0.0;
    for (double w : weights_) {
      if (!std::isfinite(w) || w < 0.0) throw Error("measure weights must be finite and >= 0");
      total += w;
    }
    if (std::abs(total - 1.0) > kMassTolerance)
      throw Error("measure weights must sum to 1 (got " + std::to_string(total) + ")");
  }

  static DiscreteMeasure uniform(SpacePtr space) {
    const std::size_t n = space->size();
    return DiscreteMeasure(std::move(space), std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  static DiscreteMeasure dirac(SpacePtr space, std::size_t atom) {
    std::vector<double> w(space->size(), 0.0);
    w.at(atom) = 1.0;
    return DiscreteMeasure(std::move(space), std::move(w));
  }

  // Rescales nonnegative masses to total one.
  static DiscreteMeasure normalized(SpacePtr space, std::vector<double> masses) {
    double total = 0.0;
    for (double m : masses) {
      if (!std::isfinite(m) || m < 0.0) throw Error("masses must be finite and >= 0");
      total += m;
    }
    if (!(total > 0.0)) throw Error("masses must have positive total");
    for (double& m : masses) m /= total;
    return DiscreteMeasure(std::move(space), std::move(masses));
  }

  const FiniteMetricSpace& space() const { return *space_; }
  const SpacePtr& space_ptr() const { return space_; }
  std::span<const double> weights() const { return weights_; }
  double weight(std::size_t i) const { return weights_[i]; }
  std::size_t size() const { return weights_.size(); }

  /// Indices with positive weight.
  std::vector<std::size_t> support() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < weights_.size(); ++i)
      if (weights_[i] > 0.0) out.push_back(i);
    return out;
  }

  bool strictly_positive() const {
    return std::all_of(weights_.begin(), weights_.end(), [](double w) { return w > 0.0; });
  }

  friend bool operator==(const DiscreteMeasure& a, const DiscreteMeasure& b) {
    return same_space(a.space_, b.space_) && a.weights_ == b.weights_;
  }

 private:
  SpacePtr space_;
  std::vector<double> weights_;
};

/// Sum metric on X x Y: d((x,y),(x',y')) = d_X(x,x') + d_Y(y,y').
class ProductMetric {
 public:
  ProductMetric(SpacePtr x, SpacePtr y) : x_(std::move(x)), y_(std::move(y)) {}

  double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return x_->distance(i, k) + y_->distance(j, l);
  }
  // Flattened grid atoms, atom = i * |Y| + j.
  double between(std::size_t p, std::size_t q) const {
    const std::size_t ny = y_->size();
    return (*this)(p / ny, p % ny, q / ny, q % ny);
  }

  double diameter() const { return x_->diameter() + y_->diameter(); }
  std::size_t size() const { return x_->size() * y_->size(); }
  const FiniteMetricSpace& x() const { return *x_; }
  const FiniteMetricSpace& y() const { return *y_; }

 private:
  SpacePtr x_;
  SpacePtr y_;
};

inline ProductMetric product_metric(SpacePtr x, SpacePtr y) {
  return ProductMetric(std::move(x), std::move(y));
}

/// The union of two coordinate spaces of equal dimension (or two equal
/// distance-table spaces). Points of `first` keep their indices; points of
/// `second` that coincide exactly with a point of `first` reuse its index.
struct SpaceUnion {
  SpacePtr space;
  std::vector<std::size_t> first_index;
  std::vector<std::size_t> second_index;
};

inline SpaceUnion unite(const SpacePtr& first, const SpacePtr& second) {
  SpaceUnion out;
  if (same_space(first, second)) {
    out.space = first;
    out.first_index.resize(first->size());
    std::iota(out.first_index.begin(), out.first_index.end(), std::size_t{0});
    out.second_index = out.first_index;
    return out;
  }
  if (!first->has_coordinates() || !second->has_coordinates() ||
      first->dimension() != second->dimension())
    throw Error("metric undefined across supports: need equal distance tables or coordinates of "
                "equal dimension");
  auto points = first->points();
  out.first_index.resize(points.size());
  std::iota(out.first_index.begin(), out.first_index.end(), std::size_t{0});
  for (const auto& p : second->points()) {
    const auto it = std::find(points.begin(), points.begin() + first->size(), p);
    if (it != points.begin() + first->size()) {
      out.second_index.push_back(static_cast<std::size_t>(it - points.begin()));
    } else {
      out.second_index.push_back(points.size());
      points.push_back(p);
    }
  }
  out.space = make_space(FiniteMetricSpace::from_points(std::move(points)));
  return out;
}

/// Pushes a measure onto a larger space through an index map.
inline DiscreteMeasure embed(const DiscreteMeasure& measure, SpacePtr target,
                             std::span<const std::size_t> index_map) {
  std::vector<double> w(target->size(), 0.0);
  for (std::size_t i = 0; i < measure.size(); ++i) w.at(index_map[i]) += measure.weight(i);
  return DiscreteMeasure(std::move(target), std::move(w));
}

enum class PerturbMode { weight_jitter, empirical_subsample, point_jitter };

inline std::optional<PerturbMode> parse_perturb_mode(std::string_view name) {
  if (name == "weight-jitter") return PerturbMode::weight_jitter;
  if (name == "empirical-subsample") return PerturbMode::empirical_subsample;
  if (name == "point-jitter") return PerturbMode::point_jitter;
  return std::nullopt;
}

inline const char* to_string(PerturbMode mode) {
  switch (mode) {
    case PerturbMode::weight_jitter: return "weight-jitter";
    case PerturbMode::empirical_subsample: return "empirical-subsample";
    case PerturbMode::point_jitter: return "point-jitter";
  }
  return "?";
}

/// Seeded perturbation of a measure.
///
/// weight-jitter multiplies weight i by (1 + u_i), u_i ~ U[-magnitude, magnitude],
/// and renormalises. empirical-subsample draws ceil(magnitude) atoms i.i.d. and
/// returns their empirical measure on the same space. point-jitter adds
/// U[-magnitude, magnitude] noise to every coordinate and returns the weights on a
/// fresh space. Magnitude 0 returns the input unchanged in every mode.
inline DiscreteMeasure perturb(const DiscreteMeasure& measure, PerturbMode mode, double magnitude,
                               std::uint64_t seed) {
  if (!std::isfinite(magnitude) || magnitude < 0.0)
    throw Error("perturbation magnitude must be finite and >= 0");
  if (magnitude == 0.0) return measure;
  Rng rng(seed, to_string(mode));
  switch (mode) {
    case PerturbMode::weight_jitter: {
      std::vector<double> w(measure.weights().begin(), measure.weights().end());
      for (double& x : w) {
        const double factor = 1.0 + rng.uniform(-magnitude, magnitude);
        if (factor < 0.0) throw Error("weight-jitter magnitude drives a weight negative");
        x *= factor;
      }
      return DiscreteMeasure::normalized(measure.space_ptr(), std::move(w));
    }
    case PerturbMode::empirical_subsample: {
      const auto draws = static_cast<std::size_t>(std::ceil(magnitude));
      std::vector<double> cdf(measure.size());
      std::partial_sum(measure.weights().begin(), measure.weights().end(), cdf.begin());
      std::vector<double> counts(measure.size(), 0.0);
      for (std::size_t s = 0; s < draws; ++s) {
        const double u = rng.uniform() * cdf.back();
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        if (it == cdf.end()) --it;
        // Skip zero-weight atoms that share a CDF value with their successor.
        while (measure.weight(static_cast<std::size_t>(it - cdf.begin())) == 0.0) ++it;
        counts[static_cast<std::size_t>(it - cdf.begin())] += 1.0;
      }
      return DiscreteMeasure::normalized(measure.space_ptr(), std::move(counts));
    }
    case PerturbMode::point_jitter: {
      if (!measure.space().has_coordinates())
        throw Error("point-jitter needs a coordinate space");
      auto points = measure.space().points();
      for (auto& p : points)
        for (double& v : p) v += rng.uniform(-magnitude, magnitude);
      return DiscreteMeasure(make_space(FiniteMetricSpace::from_points(std::move(points))),
                             std::vector<double>(measure.weights().begin(),
                                                 measure.weights().end()));
    }
  }
  throw Error("unknown perturbation mode");
}

}  // namespace ipfp
