#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ipfp/error.hpp"
#include "ipfp/log_sum_exp.hpp"
#include "ipfp/matrix.hpp"
#include "ipfp/metric_measure.hpp"

namespace ipfp {

enum class Axis { x, y };

enum class LipschitzSource { analytic, discrete_estimate };

inline const char* to_string(LipschitzSource s) {
  return s == LipschitzSource::analytic ? "analytic" : "discrete-estimate";
}

/// Largest |f(p) - f(q)| / d(p, q) over distinct points of a finite space.
/// Returns +inf when two coincident points carry different values.
inline double discrete_lipschitz(std::span<const double> values, const FiniteMetricSpace& space) {
  if (values.size() != space.size()) throw Error("function size does not match its space");
  double lip = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = i + 1; j < values.size(); ++j) {
      const double diff = std::abs(values[i] - values[j]);
      const double d = space.distance(i, j);
      if (d > 0.0) {
        lip = std::max(lip, diff / d);
      } else if (diff > 0.0) {
        return std::numeric_limits<double>::infinity();
      }
    }
  return lip;
}

/// Largest |c(p) - c(q)| / d_{XxY}(p, q) over distinct grid atoms, under the sum
/// metric. A lower bound on the continuum Lipschitz constant.
inline double discrete_lipschitz(const Matrix<double>& table, const FiniteMetricSpace& x,
                                 const FiniteMetricSpace& y) {
  const std::size_t nx = x.size();
  const std::size_t ny = y.size();
  if (table.rows() != nx || table.cols() != ny) throw Error("cost table does not match its spaces");
  if (x.diameter() == 0.0 && y.diameter() == 0.0)
    throw Error("Lipschitz ratio undefined: all grid points coincide");
  double lip = 0.0;
  const std::size_t atoms = nx * ny;
  for (std::size_t p = 0; p < atoms; ++p) {
    const std::size_t i = p / ny, j = p % ny;
    for (std::size_t q = p + 1; q < atoms; ++q) {
      const std::size_t k = q / ny, l = q % ny;
      const double d = x.distance(i, k) + y.distance(j, l);
      const double diff = std::abs(table(i, j) - table(k, l));
      if (d > 0.0) {
        lip = std::max(lip, diff / d);
      } else if (diff > 0.0) {
        return std::numeric_limits<double>::infinity();
      }
    }
  }
  return lip;
}

/// Cost values on the X x Y grid with their sup-norm and a Lipschitz constant
/// (w.r.t. the sum metric) that is either analytic or a discrete estimate.
class CostModel {
 public:
  // Analytic constants are checked against the discrete estimate up to this grid size.
  static constexpr std::size_t kLipschitzCheckLimit = 4096;

  CostModel(SpacePtr x, SpacePtr y, Matrix<double> table,
            std::optional<double> analytic_lipschitz = std::nullopt)
      : x_(std::move(x)), y_(std::move(y)), table_(std::move(table)) {
    if (!x_ || !y_) throw Error("cost needs both spaces");
    if (table_.rows() != x_->size() || table_.cols() != y_->size())
      throw Error("cost table is " + std::to_string(table_.rows()) + "x" +
                  std::to_string(table_.cols()) + " but the spaces are " +
                  std::to_string(x_->size()) + "x" + std::to_string(y_->size()));
    sup_norm_ = 0.0;
    for (double c : table_.data()) {
      if (!std::isfinite(c)) throw Error("cost values must be finite");
      sup_norm_ = std::max(sup_norm_, std::abs(c));
    }
    if (analytic_lipschitz) {
      set_analytic(*analytic_lipschitz);
    } else {
      source_ = LipschitzSource::discrete_estimate;
      if (x_->diameter() > 0.0 || y_->diameter() > 0.0) {
        lip_ = discrete_lipschitz(table_, *x_, *y_);
      } else {
        const bool constant = std::all_of(table_.data().begin(), table_.data().end(),
                                          [&](double c) { return c == table_(0, 0); });
        lip_ = constant ? 0.0 : std::numeric_limits<double>::infinity();
      }
    }
  }

  /// Same table, with a user-supplied analytic Lipschitz constant.
  CostModel with_lipschitz(double analytic) const {
    CostModel copy = *this;
    copy.set_analytic(analytic);
    return copy;
  }

  const SpacePtr& space_x() const { return x_; }
  const SpacePtr& space_y() const { return y_; }
  const Matrix<double>& table() const { return table_; }
  double operator()(std::size_t i, std::size_t j) const { return table_(i, j); }
  std::size_t rows() const { return table_.rows(); }
  std::size_t cols() const { return table_.cols(); }

  double sup_norm() const { return sup_norm_; }
  double lip_const() const { return lip_; }
  LipschitzSource lip_source() const { return source_; }

  friend bool operator==(const CostModel& a, const CostModel& b) {
    return same_space(a.x_, b.x_) && same_space(a.y_, b.y_) && a.table_ == b.table_;
  }

 private:
  void set_analytic(double lip) {
    if (!std::isfinite(lip) || lip < 0.0) throw Error("Lipschitz constant must be finite and >= 0");
    if (table_.size() <= kLipschitzCheckLimit && (x_->diameter() > 0.0 || y_->diameter() > 0.0)) {
      const double estimate = discrete_lipschitz(table_, *x_, *y_);
      if (lip < estimate * (1.0 - 1e-12))
        throw Error("analytic Lipschitz constant " + std::to_string(lip) +
                    " is below the grid estimate " + std::to_string(estimate));
    }
    lip_ = lip;
    source_ = LipschitzSource::analytic;
  }

  SpacePtr x_;
  SpacePtr y_;
  Matrix<double> table_;
  double sup_norm_ = 0.0;
  double lip_ = 0.0;
  LipschitzSource source_ = LipschitzSource::discrete_estimate;
};

inline void check_epsilon(double epsilon) {
  if (!std::isfinite(epsilon) || epsilon <= 0.0) throw Error("epsilon must be finite and > 0");
}

/// c(x, y) = |x - y|^2 / epsilon. Lipschitz constant 2 (max|x| + max|y|) / epsilon.
inline CostModel quadratic_cost(SpacePtr x, SpacePtr y, double epsilon) {
  check_epsilon(epsilon);
  if (!x->has_coordinates() || !y->has_coordinates())
    throw Error("quadratic cost needs coordinate spaces");
  if (x->dimension() != y->dimension())
    throw Error("quadratic cost needs spaces of equal dimension");
  Matrix<double> table(x->size(), y->size());
  for (std::size_t i = 0; i < x->size(); ++i)
    for (std::size_t j = 0; j < y->size(); ++j) {
      const double d = FiniteMetricSpace::euclidean(x->point(i), y->point(j));
      table(i, j) = d * d / epsilon;
    }
  auto max_norm = [](const FiniteMetricSpace& s) {
    double r = 0.0;
    const std::vector<double> origin(s.dimension(), 0.0);
    for (const auto& p : s.points()) r = std::max(r, FiniteMetricSpace::euclidean(p, origin));
    return r;
  };
  const double lip = 2.0 * (max_norm(*x) + max_norm(*y)) / epsilon;
  return CostModel(std::move(x), std::move(y), std::move(table), lip);
}

/// c(x, y) = d(x, y) / epsilon, with d Euclidean across coordinate spaces or the
/// shared table when X and Y are the same table space. Lipschitz constant 1 / epsilon.
inline CostModel absolute_cost(SpacePtr x, SpacePtr y, double epsilon) {
  check_epsilon(epsilon);
  Matrix<double> table(x->size(), y->size());
  if (x->has_coordinates() && y->has_coordinates()) {
    if (x->dimension() != y->dimension())
      throw Error("absolute cost needs spaces of equal dimension");
    for (std::size_t i = 0; i < x->size(); ++i)
      for (std::size_t j = 0; j < y->size(); ++j)
        table(i, j) = FiniteMetricSpace::euclidean(x->point(i), y->point(j)) / epsilon;
  } else if (same_space(x, y)) {
    for (std::size_t i = 0; i < x->size(); ++i)
      for (std::size_t j = 0; j < y->size(); ++j) table(i, j) = x->distance(i, j) / epsilon;
  } else {
    throw Error("absolute cost needs coordinate spaces or one shared distance table");
  }
  return CostModel(std::move(x), std::move(y), std::move(table), 1.0 / epsilon);
}

/// Explicit cost table; the Lipschitz constant is the grid estimate unless supplied.
inline CostModel table_cost(SpacePtr x, SpacePtr y, Matrix<double> table,
                            std::optional<double> analytic_lipschitz = std::nullopt) {
  return CostModel(std::move(x), std::move(y), std::move(table), analytic_lipschitz);
}

inline double discrete_lipschitz(const CostModel& cost) {
  return discrete_lipschitz(cost.table(), *cost.space_x(), *cost.space_y());
}

/// Gibbs kernel K = exp(-c), held as its logarithm -c.
class KernelTable {
 public:
  explicit KernelTable(const CostModel& cost)
      : log_kernel_(cost.rows(), cost.cols()), sup_norm_(cost.sup_norm()) {
    for (std::size_t i = 0; i < cost.rows(); ++i)
      for (std::size_t j = 0; j < cost.cols(); ++j) log_kernel_(i, j) = -cost(i, j);
  }

  std::size_t rows() const { return log_kernel_.rows(); }
  std::size_t cols() const { return log_kernel_.cols(); }
  double log_kernel(std::size_t i, std::size_t j) const { return log_kernel_(i, j); }
  double kernel(std::size_t i, std::size_t j) const { return std::exp(log_kernel_(i, j)); }
  const Matrix<double>& log_table() const { return log_kernel_; }
  double cost_sup_norm() const { return sup_norm_; }

 private:
  Matrix<double> log_kernel_;
  double sup_norm_;
};

inline std::vector<double> log_weights(const DiscreteMeasure& measure) {
  std::vector<double> out(measure.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = measure.weight(i) > 0.0 ? std::log(measure.weight(i))
                                     : -std::numeric_limits<double>::infinity();
  return out;
}

/// log E^x_{pi0}(f)(y_j) = log sum_i K(x_i, y_j) f(x_i) pi0(x_i), from log f.
inline std::vector<double> log_kernel_apply_x(const KernelTable& kernel,
                                              std::span<const double> log_f,
                                              const DiscreteMeasure& pi0) {
  if (log_f.size() != kernel.rows() || pi0.size() != kernel.rows())
    throw Error("kernel_apply_x: dimension mismatch");
  std::vector<double> out(kernel.cols());
  for (std::size_t j = 0; j < kernel.cols(); ++j)
    out[j] = log_sum_exp_weighted(
        kernel.rows(), [&](std::size_t i) { return pi0.weight(i); },
        [&](std::size_t i) { return kernel.log_kernel(i, j) + log_f[i]; });
  return out;
}

/// log E^y_{pi1}(g)(x_i) = log sum_j K(x_i, y_j) g(y_j) pi1(y_j), from log g.
inline std::vector<double> log_kernel_apply_y(const KernelTable& kernel,
                                              std::span<const double> log_g,
                                              const DiscreteMeasure& pi1) {
  if (log_g.size() != kernel.cols() || pi1.size() != kernel.cols())
    throw Error("kernel_apply_y: dimension mismatch");
  std::vector<double> out(kernel.rows());
  for (std::size_t i = 0; i < kernel.rows(); ++i)
    out[i] = log_sum_exp_weighted(
        kernel.cols(), [&](std::size_t j) { return pi1.weight(j); },
        [&](std::size_t j) { return kernel.log_kernel(i, j) + log_g[j]; });
  return out;
}

namespace detail {
inline std::vector<double> checked_log(std::span<const double> values, const char* what) {
  std::vector<double> out(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!(values[k] > 0.0) || !std::isfinite(values[k]))
      throw Error(std::string(what) + ": input must be strictly positive and finite");
    out[k] = std::log(values[k]);
  }
  return out;
}

inline std::vector<double> exp_all(std::vector<double> values) {
  for (double& v : values) v = std::exp(v);
  return values;
}
}  // namespace detail

inline std::vector<double> kernel_apply_x(const KernelTable& kernel, std::span<const double> f,
                                          const DiscreteMeasure& pi0) {
  return detail::exp_all(log_kernel_apply_x(kernel, detail::checked_log(f, "kernel_apply_x"), pi0));
}

inline std::vector<double> kernel_apply_y(const KernelTable& kernel, std::span<const double> g,
                                          const DiscreteMeasure& pi1) {
  return detail::exp_all(log_kernel_apply_y(kernel, detail::checked_log(g, "kernel_apply_y"), pi1));
}

}  // namespace ipfp
