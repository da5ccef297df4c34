/* Copyright 2026 kvcsim contributors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <span>
#include <utility>
#include <vector>

namespace kvcsim {

struct CdfPoint {
  double value = 0.0;
  double cumulative_fraction = 0.0;
};

// Sorted empirical CDF with duplicate values collapsed; ends at 1.0.
std::vector<CdfPoint> empirical_cdf(std::span<const double> values);

// Nearest-rank percentile (p in [0,100]) over an unsorted sample; 0 on empty.
double percentile(std::span<const double> values, double p);

double mean(std::span<const double> values);

}  // namespace kvcsim
