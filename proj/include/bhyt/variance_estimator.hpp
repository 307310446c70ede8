// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0
//
// Closed-form variance estimates computed from weights alone. None of these
// functions looks at activations, which is what lets the estimate run beside
// the attention path and be cached between weight refreshes.

#pragma once

#include <cstdint>
#include <functional>
#include <string_view>

#include "bhyt/activation.hpp"
#include "bhyt/numerics.hpp"

namespace bhyt {

class RngStream;

enum class EstimateSource { AttnClosedForm, MlpClosedForm, ResidualSum, ExactMeasured };

std::string_view to_string(EstimateSource source);

struct VarianceEstimate {
  double value = 0.0;
  std::int64_t computed_at_step = 0;
  EstimateSource source = EstimateSource::AttnClosedForm;
  /// Forces the next maybe_refresh call to recompute.
  bool invalidated = false;
};

struct RefreshPolicy {
  std::int64_t interval_steps = 100;

  bool fires(std::int64_t step) const noexcept { return step % interval_steps == 0; }
};

/// s̃²_h = ‖W_V W_O‖_F² / (T·d) · λ²/κ². With several heads W_V holds the
/// stacked value projections, so the product is the full concatenated map.
VarianceEstimate attn_output_variance(const Tensor& w_v, const Tensor& w_o, std::size_t seq_len,
                                      std::size_t d, double lambda_attn, double kappa,
                                      std::int64_t step = 0);

/// s̃²_h = τ · s_z²/d · ‖W₁W₂‖_F².
VarianceEstimate mlp_output_variance(const Tensor& w_1, const Tensor& w_2, double tau, double s_z2,
                                     std::size_t d, std::int64_t step = 0);

/// s̃²_x' = s²_x + s̃²_h; the residual/sublayer cross-covariance is dropped.
VarianceEstimate residual_variance_sum(double s_x2, double s_h2, std::int64_t step = 0);

/// Estimates τ = Var(φ(u))/Var(u) for u ~ N(0, s_u2) from `samples` draws.
double calibrate_tau(Activation activation, double s_u2, std::size_t samples, RngStream& rng);
/// Overload taking the activation by name; unknown names raise ParameterError.
double calibrate_tau(std::string_view activation, double s_u2, std::size_t samples, RngStream& rng);

/// Returns `recompute(step)` when the policy fires at `step` (or the estimate
/// was invalidated) and the cached estimate has not already been computed for
/// this step; otherwise returns `estimate` unchanged.
VarianceEstimate maybe_refresh(const VarianceEstimate& estimate, std::int64_t step,
                               const RefreshPolicy& policy,
                               const std::function<VarianceEstimate(std::int64_t)>& recompute);

}  // namespace bhyt
