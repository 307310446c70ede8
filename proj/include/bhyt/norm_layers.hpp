// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0
//
// Normalization strategies sharing one shape: y = γ ⊙ g(a_r · x) where a_r is
// a per-row scale and g is tanh (bounded kinds) or the identity (RMS kinds).
//
//   RMSNorm        a = 1/√(m + eps)                 g = id,   m = mean(x²)
//   RMSNormApprox  a = 1/√(v + eps)                 g = id,   v injected
//   LNS            a = 1/(√ℓ · √(m + eps))          g = id
//   DyT            a = α_DyT                        g = tanh
//   BHyTStar       a = λ/(κ·√(var + eps) + |μ|)     g = tanh, centered moments
//   BHyT           a = λ/(κ·√(m + eps))             g = tanh, m exact or injected

#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "bhyt/numerics.hpp"

namespace bhyt {

enum class NormKind { RMSNorm, RMSNormApprox, LNS, DyT, BHyTStar, BHyT };
enum class VarianceSource { Exact, Injected };
enum class ScaleGrad { Differentiate, StopGradient };

std::string_view to_string(NormKind kind);
NormKind norm_kind_from_string(std::string_view name);
std::string_view to_string(ScaleGrad mode);
ScaleGrad scale_grad_from_string(std::string_view name);

bool is_tanh_kind(NormKind kind) noexcept;

/// κ = (1 − p)^(−1/2).
double kappa_from_probability(double p);

/// Chebyshev input scale α = λ/(κs + |μ|) with κ from `p`; guarantees
/// P(|αx| ≤ λ) ≥ p for any finite-variance x with mean μ and std s.
double chebyshev_scale(double mu, double s, double lambda, double p);

struct NormConfig {
  NormKind kind = NormKind::RMSNorm;
  double lambda = 1.0;
  double kappa = 10.0;
  Tensor gamma;  // [d]
  double alpha_dyt = 1.0;
  int layer_index = 1;
  double eps = 1e-8;
  VarianceSource variance_source = VarianceSource::Exact;
  ScaleGrad scale_grad = ScaleGrad::Differentiate;

  /// Defaults for `kind` at width d: γ = 1, Injected variance for
  /// RMSNormApprox, and StopGradient whenever the variance is injected.
  static NormConfig make(NormKind kind, std::size_t d);

  /// Throws ParameterError/DimensionError when an invariant is violated.
  void validate(std::size_t d) const;

  bool uses_injected_variance() const noexcept;
  /// True when the backward pass differentiates through the row statistics.
  bool differentiates_scale() const noexcept;
};

/// Intermediates retained by a forward pass for the backward pass.
struct NormCache {
  bool valid = false;
  Tensor x;
  Tensor act;                  // g(a_r · x), before γ
  std::vector<double> scale;   // a_r
  std::vector<double> mean;    // μ_r (BHyTStar)
  std::vector<double> spread;  // m + eps (uncentered kinds) or √(var + eps) (BHyTStar)
  std::vector<double> moment;  // the row statistic itself: m, var, or the injected value
};

struct NormGrads {
  Tensor d_input;
  Tensor d_gamma;
  double d_alpha_dyt = 0.0;
};

/// Generic forward. `injected_var` holds either one value (broadcast) or one
/// value per row and is read only when cfg uses injected variance.
/// `frozen_scale`, when non-empty, replaces the per-row scale entirely; it
/// lets a finite-difference oracle evaluate the function that a StopGradient
/// backward actually differentiates.
Tensor norm_forward(const Tensor& x, const NormConfig& cfg,
                    std::span<const double> injected_var = {}, NormCache* cache = nullptr,
                    std::span<const double> frozen_scale = {});

NormGrads norm_backward(const NormConfig& cfg, const NormCache& cache, const Tensor& grad_out);

Tensor bhyt_star_forward(const Tensor& x, const NormConfig& cfg, NormCache* cache = nullptr);
Tensor bhyt_forward(const Tensor& x, const NormConfig& cfg, std::span<const double> var_in = {},
                    NormCache* cache = nullptr);
Tensor rmsnorm_forward(const Tensor& x, const NormConfig& cfg, std::span<const double> var_in = {},
                       NormCache* cache = nullptr);
Tensor lns_forward(const Tensor& x, const NormConfig& cfg, NormCache* cache = nullptr);
Tensor dyt_forward(const Tensor& x, const NormConfig& cfg, NormCache* cache = nullptr);

}  // namespace bhyt
