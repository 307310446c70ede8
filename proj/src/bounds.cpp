// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include "bhyt/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "bhyt/error.hpp"
#include "bhyt/norm_layers.hpp"

namespace bhyt {

std::string_view to_string(Distribution d) {
  switch (d) {
    case Distribution::Gaussian: return "gaussian";
    case Distribution::Laplace: return "laplace";
    case Distribution::Uniform: return "uniform";
    case Distribution::StudentT5: return "student_t5";
  }
  return "unknown";
}

double sample(Distribution d, double mu, double s, RngStream& rng) {
  switch (d) {
    case Distribution::Gaussian:
      return mu + s * rng.normal();
    case Distribution::Laplace: {
      const double u = rng.uniform() - 0.5;
      const double b = s / std::numbers::sqrt2;
      return mu - b * std::copysign(1.0, u) * std::log1p(-2.0 * std::abs(u));
    }
    case Distribution::Uniform:
      return mu + s * std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0);
    case Distribution::StudentT5: {
      double chi2 = 0.0;
      for (int i = 0; i < 5; ++i) {
        const double g = rng.normal();
        chi2 += g * g;
      }
      const double t = rng.normal() / std::sqrt(chi2 / 5.0);
      return mu + s * t / std::sqrt(5.0 / 3.0);
    }
  }
  throw ParameterError("unknown distribution");
}

double chebyshev_coverage(Distribution d, double mu, double s, double lambda, double p,
                          std::size_t samples, RngStream& rng) {
  if (samples == 0) throw ParameterError("chebyshev_coverage needs at least one sample");
  const double alpha = chebyshev_scale(mu, s, lambda, p);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    inside += std::abs(alpha * sample(d, mu, s, rng)) <= lambda ? 1 : 0;
  }
  return static_cast<double>(inside) / static_cast<double>(samples);
}

bool TanhVarianceCheck::within(double k) const {
  return variance >= lower - k * std_error && variance <= upper + k * std_error;
}

TanhVarianceCheck tanh_variance_mc(double lambda, double kappa, std::size_t samples,
                                   RngStream& rng) {
  if (!(lambda > 0.0) || !(kappa > 1.0)) throw ParameterError("tanh_variance_mc needs λ > 0, κ > 1");
  if (samples < 2) throw ParameterError("tanh_variance_mc needs at least two samples");
  // Truncate at |x| ≤ κ, set α from the truncated s, then condition on |αx| ≤ λ.
  std::vector<double> xs;
  xs.reserve(samples);
  while (xs.size() < samples) {
    const double x = rng.normal();
    if (std::abs(x) <= kappa) xs.push_back(x);
  }
  double m2 = 0.0;
  for (double x : xs) m2 += x * x;
  const double s = std::sqrt(m2 / static_cast<double>(xs.size()));
  const double alpha = lambda / (kappa * s);

  std::vector<double> ys;
  ys.reserve(xs.size());
  for (double x : xs) {
    if (std::abs(alpha * x) <= lambda) ys.push_back(std::tanh(alpha * x));
  }
  const double n = static_cast<double>(ys.size());
  double mean = 0.0;
  for (double y : ys) mean += y;
  mean /= n;
  double var = 0.0, m4 = 0.0;
  for (double y : ys) {
    const double c = (y - mean) * (y - mean);
    var += c;
    m4 += c * c;
  }
  var /= n;
  m4 /= n;

  TanhVarianceCheck out;
  out.lambda = lambda;
  out.kappa = kappa;
  out.variance = var;
  out.std_error = std::sqrt(std::max(m4 - var * var, 0.0) / n);
  const double r = std::tanh(lambda) / lambda;
  out.upper = lambda * lambda / (kappa * kappa);
  out.lower = r * r * out.upper;
  return out;
}

}  // namespace bhyt
