#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

namespace qbp {

inline double log_sum_exp(std::span<const double> x) {
  const double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

/// In-place softmax of log-weights; returns the log normalizer.
inline double softmax_inplace(std::span<double> x) {
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double& v : x) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : x) v /= s;
  return m + std::log(s);
}

/// Scales x to sum 1. Returns false if the sum is not a positive finite number.
inline bool normalize_inplace(std::span<double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  if (!(s > 0.0) || !std::isfinite(s)) return false;
  for (double& v : x) v /= s;
  return true;
}

/// Negative entropy sum p ln p with 0 ln 0 = 0.
inline double neg_entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h += v * std::log(v);
  return h;
}

/// Pairwise (cascade) summation; result depends only on the order of x.
inline double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 8) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
  return d;
}

}  // namespace qbp
