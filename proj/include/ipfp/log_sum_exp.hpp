#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

namespace ipfp {

/// log(sum_k exp(term(k))) for k in [0, count), max-shifted.
///
/// Terms equal to -inf contribute nothing; an all -inf input yields -inf.
/// Summation runs left to right so results are bit-reproducible.
template <class Term>
double log_sum_exp_by(std::size_t count, Term&& term) {
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  double shift = neg_inf;
  for (std::size_t k = 0; k < count; ++k) {
    const double t = term(k);
    if (t > shift) shift = t;
  }
  if (shift == neg_inf) return neg_inf;
  double acc = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    const double t = term(k);
    if (t != neg_inf) acc += std::exp(t - shift);
  }
  return shift + std::log(acc);
}

/// log(sum_k w(k) exp(term(k))) over k with w(k) > 0, max-shifted.
/// Weights are multiplied in, not added as logs.
template <class Weight, class Term>
double log_sum_exp_weighted(std::size_t count, Weight&& weight, Term&& term) {
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  double shift = neg_inf;
  for (std::size_t k = 0; k < count; ++k) {
    if (!(weight(k) > 0.0)) continue;
    const double t = term(k);
    if (t > shift) shift = t;
  }
  if (shift == neg_inf) return neg_inf;
  double acc = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    const double w = weight(k);
    if (w > 0.0) acc += w * std::exp(term(k) - shift);
  }
  return shift + std::log(acc);
}

inline double log_sum_exp(std::span<const double> values) {
  return log_sum_exp_by(values.size(), [&](std::size_t k) { return values[k]; });
}

}  // namespace ipfp
