#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "cpfs/estimate.hpp"

namespace cpfs::test {

// 99% normal-approximation interval check for a sample mean against a target.
inline bool mean_within_ci(std::span<const double> xs, double target,
                           double level = 0.99) {
  double sum = 0, sumsq = 0;
  for (double x : xs) {
    sum += x;
    sumsq += x * x;
  }
  MCEstimate e = mean_estimate(sum, sumsq, xs.size(), level, 0, 0);
  return target >= e.ci_lo && target <= e.ci_hi;
}

inline bool proportion_within_ci(uint64_t successes, uint64_t n, double target,
                                 double level = 0.99) {
  auto [lo, hi] = wilson_interval(successes, n, level);
  return target >= lo && target <= hi;
}

}  // namespace cpfs::test
