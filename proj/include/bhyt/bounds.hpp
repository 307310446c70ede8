// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0
//
// Monte-Carlo checks of the input-scaling bound and the tanh variance bracket.

#pragma once

#include <array>
#include <cstddef>
#include <string_view>

#include "bhyt/rng.hpp"

namespace bhyt {

/// Sampling families, each parameterized by its mean and standard deviation.
enum class Distribution { Gaussian, Laplace, Uniform, StudentT5 };

inline constexpr std::array<Distribution, 4> kAllDistributions = {
    Distribution::Gaussian, Distribution::Laplace, Distribution::Uniform, Distribution::StudentT5};

std::string_view to_string(Distribution d);

/// One draw with mean `mu` and standard deviation `s`.
double sample(Distribution d, double mu, double s, RngStream& rng);

/// Fraction of `samples` draws with |αx| ≤ λ, α = chebyshev_scale(mu, s, λ, p).
double chebyshev_coverage(Distribution d, double mu, double s, double lambda, double p,
                          std::size_t samples, RngStream& rng);

struct TanhVarianceCheck {
  double lambda = 0.0;
  double kappa = 0.0;
  double variance = 0.0;
  /// Standard error of `variance` (delta method on the centered second moment).
  double std_error = 0.0;
  double lower = 0.0;  // (tanh λ / λ)² λ² / κ²
  double upper = 0.0;  // λ² / κ²

  /// True when `variance` lies in [lower − k·se, upper + k·se].
  bool within(double k) const;
};

/// Var(tanh(αx)) for x ~ N(0, 1) conditioned on |αx| ≤ λ with α = λ/(κ·s),
/// where s is the standard deviation of the truncated normal.
TanhVarianceCheck tanh_variance_mc(double lambda, double kappa, std::size_t samples,
                                   RngStream& rng);

}  // namespace bhyt
