// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include "bhyt/variance_estimator.hpp"

#include <cmath>

#include "bhyt/error.hpp"
#include "bhyt/rng.hpp"

namespace bhyt {

std::string_view to_string(EstimateSource source) {
  switch (source) {
    case EstimateSource::AttnClosedForm: return "attn_closed_form";
    case EstimateSource::MlpClosedForm: return "mlp_closed_form";
    case EstimateSource::ResidualSum: return "residual_sum";
    case EstimateSource::ExactMeasured: return "exact_measured";
  }
  return "?";
}

VarianceEstimate attn_output_variance(const Tensor& w_v, const Tensor& w_o, std::size_t seq_len,
                                      std::size_t d, double lambda_attn, double kappa,
                                      std::int64_t step) {
  if (seq_len == 0 || d == 0) {
    throw DimensionError("attn_output_variance: T and d must be positive");
  }
  if (w_v.rank() != 2 || w_o.rank() != 2 || w_v.cols() != w_o.rows() || w_v.rows() != d ||
      w_o.cols() != d) {
    throw DimensionError("attn_output_variance: W_V must be [d x d_V] and W_O [d_V x d]");
  }
  const double ratio = lambda_attn / kappa;
  const double frob = frobenius_norm_sq(matmul(w_v, w_o));
  const double value = frob / (static_cast<double>(seq_len) * static_cast<double>(d)) * ratio * ratio;
  return {value, step, EstimateSource::AttnClosedForm, false};
}

VarianceEstimate mlp_output_variance(const Tensor& w_1, const Tensor& w_2, double tau, double s_z2,
                                     std::size_t d, std::int64_t step) {
  if (!(tau >= 0.0) || !(s_z2 >= 0.0)) {
    throw ParameterError("mlp_output_variance: tau and s_z2 must be non-negative");
  }
  if (d == 0 || w_1.rank() != 2 || w_2.rank() != 2 || w_1.cols() != w_2.rows() ||
      w_1.rows() != d || w_2.cols() != d) {
    throw DimensionError("mlp_output_variance: W_1 must be [d x d_m] and W_2 [d_m x d]");
  }
  const double frob = frobenius_norm_sq(matmul(w_1, w_2));
  return {tau * s_z2 / static_cast<double>(d) * frob, step, EstimateSource::MlpClosedForm, false};
}

VarianceEstimate residual_variance_sum(double s_x2, double s_h2, std::int64_t step) {
  if (!(s_x2 >= 0.0) || !(s_h2 >= 0.0)) {
    throw ParameterError("residual_variance_sum: variances must be non-negative");
  }
  return {s_x2 + s_h2, step, EstimateSource::ResidualSum, false};
}

double calibrate_tau(Activation activation, double s_u2, std::size_t samples, RngStream& rng) {
  if (samples < 1000) {
    throw ParameterError("calibrate_tau: need at least 1000 samples");
  }
  if (!(s_u2 > 0.0)) {
    throw ParameterError("calibrate_tau: s_u2 must be positive");
  }
  const double s_u = std::sqrt(s_u2);
  // Welford accumulators for u and φ(u).
  double mean_u = 0.0, m2_u = 0.0, mean_v = 0.0, m2_v = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double u = s_u * rng.normal();
    const double v = activate(activation, u);
    const double n = static_cast<double>(i + 1);
    const double du = u - mean_u;
    mean_u += du / n;
    m2_u += du * (u - mean_u);
    const double dv = v - mean_v;
    mean_v += dv / n;
    m2_v += dv * (v - mean_v);
  }
  return m2_v / m2_u;
}

double calibrate_tau(std::string_view activation, double s_u2, std::size_t samples, RngStream& rng) {
  return calibrate_tau(activation_from_string(activation), s_u2, samples, rng);
}

VarianceEstimate maybe_refresh(const VarianceEstimate& estimate, std::int64_t step,
                               const RefreshPolicy& policy,
                               const std::function<VarianceEstimate(std::int64_t)>& recompute) {
  if (policy.interval_steps < 1) {
    throw ParameterError("RefreshPolicy: interval must be >= 1");
  }
  if (step < estimate.computed_at_step) {
    throw ParameterError("maybe_refresh: step precedes the cached estimate");
  }
  const bool due = policy.fires(step) && step != estimate.computed_at_step;
  if (!due && !estimate.invalidated) {
    return estimate;
  }
  VarianceEstimate fresh = recompute(step);
  fresh.computed_at_step = step;
  fresh.invalidated = false;
  return fresh;
}

}  // namespace bhyt
