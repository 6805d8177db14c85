#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "ipfp/cost_kernel.hpp"
#include "ipfp/error.hpp"
#include "ipfp/matrix.hpp"
#include "ipfp/metric_measure.hpp"

namespace ipfp {

/// A joint measure on the X x Y grid: the IPFP iterate P^step.
///
/// Odd steps fix the X marginal, even steps >= 2 fix the Y marginal. P^0 is the
/// reference measure exp(-c) pi0 x pi1, which generally has total mass != 1;
/// its mass is kept in total_mass and it is never renormalised.
class Coupling {
 public:
  Coupling(SpacePtr x, SpacePtr y, Matrix<double> weights, std::size_t step)
      : x_(std::move(x)), y_(std::move(y)), weights_(std::move(weights)), step_(step) {
    if (weights_.rows() != x_->size() || weights_.cols() != y_->size())
      throw Error("coupling table does not match its spaces");
    for (double w : weights_.data()) {
      if (!std::isfinite(w) || w < 0.0) throw Error("coupling weights must be finite and >= 0");
      total_mass_ += w;
    }
  }

  const SpacePtr& space_x() const { return x_; }
  const SpacePtr& space_y() const { return y_; }
  const Matrix<double>& weights() const { return weights_; }
  double operator()(std::size_t i, std::size_t j) const { return weights_(i, j); }
  std::size_t step() const { return step_; }
  bool odd() const { return step_ % 2 == 1; }
  double total_mass() const { return total_mass_; }

  std::vector<double> marginal(Axis axis) const {
    std::vector<double> out(axis == Axis::x ? weights_.rows() : weights_.cols(), 0.0);
    for (std::size_t i = 0; i < weights_.rows(); ++i)
      for (std::size_t j = 0; j < weights_.cols(); ++j)
        out[axis == Axis::x ? i : j] += weights_(i, j);
    return out;
  }

  /// The axis marginal as a measure; requires total mass 1 within 1e-12.
  DiscreteMeasure marginal_measure(Axis axis) const {
    return DiscreteMeasure(axis == Axis::x ? x_ : y_, marginal(axis));
  }

 private:
  SpacePtr x_;
  SpacePtr y_;
  Matrix<double> weights_;
  std::size_t step_;
  double total_mass_ = 0.0;
};

}  // namespace ipfp
