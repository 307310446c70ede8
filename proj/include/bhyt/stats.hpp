// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0
//
// Agreement metrics between a prediction series and a reference series.

#pragma once

#include <span>
#include <vector>

namespace bhyt {

/// Root-mean-square difference.
double rmse(std::span<const double> predicted, std::span<const double> truth);

/// Coefficient of determination of `predicted` as a direct estimate of
/// `truth` (the identity line, no fitted slope): 1 − SS_res / SS_tot.
double r_squared(std::span<const double> predicted, std::span<const double> truth);

double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of the average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

/// 1-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

struct AgreementMetrics {
  double rmse = 0.0;
  double r_squared = 0.0;
  double pearson = 0.0;
  double spearman = 0.0;
};

AgreementMetrics agreement(std::span<const double> predicted, std::span<const double> truth);

}  // namespace bhyt
