// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include "bhyt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/statistics/bivariate_statistics.hpp>

#include "bhyt/error.hpp"
#include "bhyt/numerics.hpp"

namespace bhyt {
namespace {

void check_pair(std::span<const double> a, std::span<const double> b, std::size_t min_size) {
  if (a.size() != b.size()) {
    throw DimensionError("metric inputs differ in length: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  if (a.size() < min_size) {
    throw DimensionError("metric needs at least " + std::to_string(min_size) + " points");
  }
  if (!all_finite(a) || !all_finite(b)) throw NumericError("metric input", 0);
}

}  // namespace

double rmse(std::span<const double> predicted, std::span<const double> truth) {
  check_pair(predicted, truth, 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = predicted[i] - truth[i];
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(truth.size()));
}

double r_squared(std::span<const double> predicted, std::span<const double> truth) {
  check_pair(predicted, truth, 2);
  const double mean =
      std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - predicted[i]) * (truth[i] - predicted[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) throw DegenerateInputError("r_squared: reference series is constant");
  return 1.0 - ss_res / ss_tot;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2);
  const auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double a) { return a == v[0]; });
  };
  if (constant(x) || constant(y)) throw DegenerateInputError("pearson: a series is constant");
  return boost::math::statistics::correlation_coefficient(x, y);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2);
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  return pearson(rx, ry);
}

AgreementMetrics agreement(std::span<const double> predicted, std::span<const double> truth) {
  return {rmse(predicted, truth), r_squared(predicted, truth), pearson(predicted, truth),
          spearman(predicted, truth)};
}

}  // namespace bhyt
