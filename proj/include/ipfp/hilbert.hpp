#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "ipfp/cost_kernel.hpp"
#include "ipfp/error.hpp"
#include "ipfp/rng.hpp"

namespace ipfp {

// Hilbert-Birkhoff projective metric on strictly positive functions over a
// finite set. For such functions the cone quantities M(f, g) and m(f, g) are
// the max and min of f / g, so d_H(f, g) is the oscillation of log f - log g.
// Everything here works on logarithms; no ratio is ever formed.

/// A strictly positive function held as log-values plus a separate log-scale.
/// Scaling by lambda only moves the log-scale, so d_H(f, lambda f) is exactly 0.
class PositiveFunction {
 public:
  PositiveFunction() = default;

  static PositiveFunction from_log(std::vector<double> log_values, double log_scale = 0.0) {
    for (double v : log_values)
      if (!std::isfinite(v)) throw Error("positive function needs finite log-values");
    if (!std::isfinite(log_scale)) throw Error("positive function needs a finite log-scale");
    PositiveFunction f;
    f.log_values_ = std::move(log_values);
    f.log_scale_ = log_scale;
    return f;
  }

  static PositiveFunction from_values(std::span<const double> values) {
    std::vector<double> logs(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (!(values[k] > 0.0) || !std::isfinite(values[k]))
        throw Error("positive function values must be finite and > 0");
      logs[k] = std::log(values[k]);
    }
    return from_log(std::move(logs));
  }

  PositiveFunction scaled(double lambda) const {
    if (!(lambda > 0.0)) throw Error("scale factor must be > 0");
    PositiveFunction out = *this;
    out.log_scale_ += std::log(lambda);
    return out;
  }

  std::size_t size() const { return log_values_.size(); }
  std::span<const double> log_values() const { return log_values_; }
  double log_scale() const { return log_scale_; }
  double log_value(std::size_t k) const { return log_values_[k] + log_scale_; }
  double value(std::size_t k) const { return std::exp(log_value(k)); }

 private:
  std::vector<double> log_values_;
  double log_scale_ = 0.0;
};

/// Oscillation max(a - b) - min(a - b) of two log-vectors.
inline double log_oscillation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("Hilbert metric: index sets differ");
  if (a.empty()) return 0.0;
  double hi = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    hi = std::max(hi, d);
    lo = std::min(lo, d);
  }
  return hi - lo;
}

/// d_H(f, g) = log sup(f / g) + log sup(g / f).
inline double hilbert_metric(const PositiveFunction& f, const PositiveFunction& g) {
  return log_oscillation(f.log_values(), g.log_values());
}

/// d_H between the separable grid functions f(x) g(y) and f_hat(x) g_hat(y),
/// computed over the whole grid.
inline double hilbert_metric_product(const PositiveFunction& f, const PositiveFunction& f_hat,
                                     const PositiveFunction& g, const PositiveFunction& g_hat) {
  if (f.size() != f_hat.size() || g.size() != g_hat.size())
    throw Error("Hilbert metric: index sets differ");
  double hi = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < f.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double d = (f.log_values()[i] + g.log_values()[j]) -
                       (f_hat.log_values()[i] + g_hat.log_values()[j]);
      hi = std::max(hi, d);
      lo = std::min(lo, d);
    }
  return f.size() == 0 || g.size() == 0 ? 0.0 : hi - lo;
}

/// The same quantity through the factor split d_H(f, f_hat) + d_H(g, g_hat).
inline double hilbert_metric_product_sum(const PositiveFunction& f, const PositiveFunction& f_hat,
                                         const PositiveFunction& g, const PositiveFunction& g_hat) {
  return hilbert_metric(f, f_hat) + hilbert_metric(g, g_hat);
}

/// Birkhoff contraction bound tanh(|c|_inf) for both kernel integral operators.
inline double contraction_bound(double cost_sup_norm) { return std::tanh(cost_sup_norm); }
inline double contraction_bound(const CostModel& cost) { return contraction_bound(cost.sup_norm()); }

/// Applies E^x_pi (Axis::x, pi on X) or E^y_pi (Axis::y, pi on Y) to a positive function.
inline PositiveFunction apply_kernel(const KernelTable& kernel, const PositiveFunction& f,
                                     const DiscreteMeasure& pi, Axis axis) {
  auto out = axis == Axis::x ? log_kernel_apply_x(kernel, f.log_values(), pi)
                             : log_kernel_apply_y(kernel, f.log_values(), pi);
  return PositiveFunction::from_log(std::move(out), f.log_scale());
}

struct ContractionEstimate {
  double ratio = 0.0;          // max observed d_H(Ef, Ef') / d_H(f, f')
  std::size_t evaluated = 0;   // pairs with d_H(f, f') > 0
};

/// Empirical lower bound on the Birkhoff contraction ratio of E^x_pi / E^y_pi:
/// the largest d_H(E f, E f') / d_H(f, f') over `samples` random positive pairs.
/// log f is drawn uniformly from [-log_range, log_range] per point.
inline ContractionEstimate empirical_contraction(const KernelTable& kernel,
                                                 const DiscreteMeasure& pi, Axis axis,
                                                 std::size_t samples, std::uint64_t seed,
                                                 double log_range = 3.0) {
  if (samples < 2) throw Error("empirical_contraction needs at least 2 samples");
  const std::size_t n = axis == Axis::x ? kernel.rows() : kernel.cols();
  Rng rng(seed, "empirical_contraction");
  auto draw = [&] {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-log_range, log_range);
    return PositiveFunction::from_log(std::move(v));
  };
  ContractionEstimate est;
  for (std::size_t s = 0; s < samples; ++s) {
    const auto f = draw();
    const auto g = draw();
    const double before = hilbert_metric(f, g);
    if (before == 0.0) continue;
    const double after =
        hilbert_metric(apply_kernel(kernel, f, pi, axis), apply_kernel(kernel, g, pi, axis));
    est.ratio = std::max(est.ratio, after / before);
    ++est.evaluated;
  }
  return est;
}

}  // namespace ipfp
