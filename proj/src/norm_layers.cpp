// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include "bhyt/norm_layers.hpp"

#include <cmath>
#include <string>

#include "bhyt/error.hpp"

namespace bhyt {

namespace {

double sign(double v) { return (v > 0.0) - (v < 0.0); }

double injected_at(std::span<const double> var, std::size_t row) {
  return var.size() == 1 ? var[0] : var[row];
}

}  // namespace

std::string_view to_string(NormKind kind) {
  switch (kind) {
    case NormKind::RMSNorm: return "rmsnorm";
    case NormKind::RMSNormApprox: return "rmsnorm_approx";
    case NormKind::LNS: return "lns";
    case NormKind::DyT: return "dyt";
    case NormKind::BHyTStar: return "bhyt_star";
    case NormKind::BHyT: return "bhyt";
  }
  return "?";
}

NormKind norm_kind_from_string(std::string_view name) {
  for (NormKind k : {NormKind::RMSNorm, NormKind::RMSNormApprox, NormKind::LNS, NormKind::DyT,
                     NormKind::BHyTStar, NormKind::BHyT}) {
    if (to_string(k) == name) {
      return k;
    }
  }
  throw ParameterError("unknown normalization kind '" + std::string(name) + "'");
}

std::string_view to_string(ScaleGrad mode) {
  return mode == ScaleGrad::Differentiate ? "differentiate" : "stop_gradient";
}

ScaleGrad scale_grad_from_string(std::string_view name) {
  if (name == "differentiate") return ScaleGrad::Differentiate;
  if (name == "stop_gradient") return ScaleGrad::StopGradient;
  throw ParameterError("unknown scale_grad mode '" + std::string(name) + "'");
}

bool is_tanh_kind(NormKind kind) noexcept {
  return kind == NormKind::DyT || kind == NormKind::BHyT || kind == NormKind::BHyTStar;
}

double kappa_from_probability(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw ParameterError("target probability must lie in (0, 1)");
  }
  return 1.0 / std::sqrt(1.0 - p);
}

double chebyshev_scale(double mu, double s, double lambda, double p) {
  if (!(lambda > 0.0)) {
    throw ParameterError("chebyshev_scale: lambda must be positive");
  }
  if (!(s >= 0.0) || !std::isfinite(mu)) {
    throw ParameterError("chebyshev_scale: s must be non-negative and mu finite");
  }
  const double kappa = kappa_from_probability(p);
  const double denom = kappa * s + std::abs(mu);
  if (denom == 0.0) {
    throw DegenerateInputError("chebyshev_scale: zero mean and zero spread");
  }
  return lambda / denom;
}

NormConfig NormConfig::make(NormKind kind, std::size_t d) {
  NormConfig cfg;
  cfg.kind = kind;
  cfg.gamma = Tensor({d}, 1.0);
  if (kind == NormKind::RMSNormApprox) {
    cfg.variance_source = VarianceSource::Injected;
  }
  if (cfg.uses_injected_variance()) {
    cfg.scale_grad = ScaleGrad::StopGradient;
  }
  return cfg;
}

void NormConfig::validate(std::size_t d) const {
  if (!(lambda > 0.0)) {
    throw ParameterError("norm: lambda must be positive");
  }
  if (!(kappa > 1.0)) {
    throw ParameterError("norm: kappa must exceed 1");
  }
  if (!(eps >= 0.0)) {
    throw ParameterError("norm: eps must be non-negative");
  }
  if (gamma.rank() != 1 || gamma.size() != d) {
    throw DimensionError("norm: gamma length " + std::to_string(gamma.size()) +
                         " does not match feature dimension " + std::to_string(d));
  }
  if (kind == NormKind::LNS && layer_index < 1) {
    throw ParameterError("norm: LNS layer index must be >= 1");
  }
  if (kind == NormKind::RMSNormApprox && variance_source != VarianceSource::Injected) {
    throw ParameterError("norm: RMSNormApprox requires an injected variance");
  }
  if (variance_source == VarianceSource::Injected && kind != NormKind::BHyT &&
      kind != NormKind::RMSNormApprox) {
    throw ParameterError("norm: only BHyT and RMSNormApprox accept injected variance");
  }
}

bool NormConfig::uses_injected_variance() const noexcept {
  return variance_source == VarianceSource::Injected &&
         (kind == NormKind::BHyT || kind == NormKind::RMSNormApprox);
}

bool NormConfig::differentiates_scale() const noexcept {
  if (kind == NormKind::DyT || uses_injected_variance()) {
    return false;
  }
  return scale_grad == ScaleGrad::Differentiate;
}

Tensor norm_forward(const Tensor& x, const NormConfig& cfg, std::span<const double> injected_var,
                    NormCache* cache, std::span<const double> frozen_scale) {
  if (x.rank() != 2) {
    throw DimensionError("norm_forward: expected [T x d] input");
  }
  const std::size_t t = x.rows(), d = x.cols();
  if (d == 0) {
    throw DimensionError("norm_forward: feature dimension is zero");
  }
  cfg.validate(d);

  std::vector<double> scale(t), mean, spread, moment;
  if (!frozen_scale.empty()) {
    if (frozen_scale.size() != t) {
      throw DimensionError("norm_forward: frozen scale needs one value per row");
    }
    scale.assign(frozen_scale.begin(), frozen_scale.end());
  } else if (cfg.kind == NormKind::DyT) {
    scale.assign(t, cfg.alpha_dyt);
  } else if (cfg.uses_injected_variance()) {
    if (injected_var.size() != 1 && injected_var.size() != t) {
      throw DimensionError("norm_forward: injected variance needs 1 or T values");
    }
    spread.resize(t);
    moment.resize(t);
    for (std::size_t r = 0; r < t; ++r) {
      const double v = injected_at(injected_var, r);
      moment[r] = v;
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ParameterError("norm_forward: injected variance must be finite and >= 0");
      }
      spread[r] = v + cfg.eps;
      if (spread[r] == 0.0) {
        throw DegenerateInputError("norm_forward: zero injected variance with eps = 0");
      }
      const double inv_rms = 1.0 / std::sqrt(spread[r]);
      scale[r] = cfg.kind == NormKind::BHyT ? cfg.lambda / cfg.kappa * inv_rms : inv_rms;
    }
  } else if (cfg.kind == NormKind::BHyTStar) {
    const RowMoments m = rowwise_moments(x, /*centered=*/true);
    mean.resize(t);
    spread.resize(t);
    moment.assign(m.var.data().begin(), m.var.data().end());
    for (std::size_t r = 0; r < t; ++r) {
      mean[r] = m.mean[r];
      spread[r] = std::sqrt(m.var[r] + cfg.eps);
      const double denom = cfg.kappa * spread[r] + std::abs(mean[r]);
      if (denom == 0.0) {
        throw DegenerateInputError("bhyt_star: all-zero row with eps = 0");
      }
      scale[r] = cfg.lambda / denom;
    }
  } else {
    // RMSNorm, LNS and exact BHyT share the uncentered second moment.
    const RowMoments m = rowwise_moments(x, /*centered=*/false);
    const double depth_factor =
        cfg.kind == NormKind::LNS ? 1.0 / std::sqrt(static_cast<double>(cfg.layer_index)) : 1.0;
    spread.resize(t);
    moment.assign(m.var.data().begin(), m.var.data().end());
    for (std::size_t r = 0; r < t; ++r) {
      spread[r] = m.var[r] + cfg.eps;
      if (spread[r] == 0.0) {
        throw DegenerateInputError(std::string(to_string(cfg.kind)) +
                                   ": all-zero row with eps = 0");
      }
      const double inv_rms = 1.0 / std::sqrt(spread[r]);
      scale[r] = cfg.kind == NormKind::BHyT ? cfg.lambda / cfg.kappa * inv_rms
                                            : depth_factor * inv_rms;
    }
  }

  const bool bounded = is_tanh_kind(cfg.kind);
  Tensor act({t, d});
  Tensor y({t, d});
  for (std::size_t r = 0; r < t; ++r) {
    const auto xr = x.row(r);
    auto ar = act.row(r);
    auto yr = y.row(r);
    const double a = scale[r];
    for (std::size_t i = 0; i < d; ++i) {
      ar[i] = bounded ? std::tanh(a * xr[i]) : a * xr[i];
      yr[i] = cfg.gamma[i] * ar[i];
    }
  }
  ensure_finite(y, to_string(cfg.kind));

  if (cache) {
    cache->valid = true;
    cache->x = x;
    cache->act = std::move(act);
    cache->scale = std::move(scale);
    cache->mean = std::move(mean);
    cache->spread = std::move(spread);
    cache->moment = std::move(moment);
  }
  return y;
}

NormGrads norm_backward(const NormConfig& cfg, const NormCache& cache, const Tensor& grad_out) {
  if (!cache.valid) {
    throw StateError("norm_backward: forward intermediates were not retained");
  }
  if (!grad_out.same_shape(cache.x)) {
    throw DimensionError("norm_backward: grad_out shape differs from input");
  }
  const std::size_t t = cache.x.rows(), d = cache.x.cols();
  const bool bounded = is_tanh_kind(cfg.kind);
  const bool through_stats = cfg.differentiates_scale();
  const double inv_d = 1.0 / static_cast<double>(d);

  NormGrads g{Tensor({t, d}), Tensor({d}), 0.0};
  std::vector<double> q(d);
  for (std::size_t r = 0; r < t; ++r) {
    const auto xr = cache.x.row(r);
    const auto hr = cache.act.row(r);
    const auto gr = grad_out.row(r);
    auto dx = g.d_input.row(r);
    const double a = cache.scale[r];

    // q_i = ∂L/∂(a x_i) and s = Σ q_i x_i = ∂L/∂a.
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      g.d_gamma[i] += gr[i] * hr[i];
      const double deriv = bounded ? 1.0 - hr[i] * hr[i] : 1.0;
      q[i] = gr[i] * cfg.gamma[i] * deriv;
      s += q[i] * xr[i];
      dx[i] = a * q[i];
    }
    if (cfg.kind == NormKind::DyT) {
      g.d_alpha_dyt += s;
    }
    if (!through_stats) {
      continue;
    }
    if (cfg.kind == NormKind::BHyTStar) {
      // a = λ/(κσ + |μ|), ∂σ/∂x_j = (x_j − μ)/(dσ), ∂μ/∂x_j = 1/d.
      const double mu = cache.mean[r];
      const double sigma = cache.spread[r];
      const double denom = cfg.kappa * sigma + std::abs(mu);
      const double coef = -s * a / denom;
      for (std::size_t j = 0; j < d; ++j) {
        dx[j] += coef * (cfg.kappa * (xr[j] - mu) / (d * sigma) + sign(mu) * inv_d);
      }
    } else {
      // a ∝ (m + eps)^(-1/2) ⇒ ∂a/∂x_j = −a x_j / (d (m + eps)).
      const double coef = -s * a * inv_d / cache.spread[r];
      for (std::size_t j = 0; j < d; ++j) {
        dx[j] += coef * xr[j];
      }
    }
  }
  ensure_finite(g.d_input, "norm_backward");
  return g;
}

Tensor bhyt_star_forward(const Tensor& x, const NormConfig& cfg, NormCache* cache) {
  if (cfg.kind != NormKind::BHyTStar) {
    throw ParameterError("bhyt_star_forward: config kind is not bhyt_star");
  }
  return norm_forward(x, cfg, {}, cache);
}

Tensor bhyt_forward(const Tensor& x, const NormConfig& cfg, std::span<const double> var_in,
                    NormCache* cache) {
  if (cfg.kind != NormKind::BHyT) {
    throw ParameterError("bhyt_forward: config kind is not bhyt");
  }
  return norm_forward(x, cfg, var_in, cache);
}

Tensor rmsnorm_forward(const Tensor& x, const NormConfig& cfg, std::span<const double> var_in,
                       NormCache* cache) {
  if (cfg.kind != NormKind::RMSNorm && cfg.kind != NormKind::RMSNormApprox) {
    throw ParameterError("rmsnorm_forward: config kind is not an RMSNorm variant");
  }
  return norm_forward(x, cfg, var_in, cache);
}

Tensor lns_forward(const Tensor& x, const NormConfig& cfg, NormCache* cache) {
  if (cfg.kind != NormKind::LNS) {
    throw ParameterError("lns_forward: config kind is not lns");
  }
  return norm_forward(x, cfg, {}, cache);
}

Tensor dyt_forward(const Tensor& x, const NormConfig& cfg, NormCache* cache) {
  if (cfg.kind != NormKind::DyT) {
    throw ParameterError("dyt_forward: config kind is not dyt");
  }
  return norm_forward(x, cfg, {}, cache);
}

}  // namespace bhyt
