#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace interplan {

// log(sum(exp(x))) with max-shift; -inf for an empty or all -inf input.
inline double log_sum_exp(std::span<const double> x) {
  if (x.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

// In-place softmax of log-weights.
inline void softmax_inplace(std::span<double> x) {
  const double lse = log_sum_exp(x);
  for (double& v : x) v = std::exp(v - lse);
}

}  // namespace interplan
