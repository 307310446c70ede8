// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0
//
// One causal decoder block with a swappable normalization placement and a
// hand-written reverse pass.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "bhyt/activation.hpp"
#include "bhyt/norm_layers.hpp"
#include "bhyt/numerics.hpp"
#include "bhyt/variance_estimator.hpp"

namespace bhyt {

class RngStream;

/// Where normalization sits and which kind it is.
///   PreLN          RMSNorm before each sublayer
///   PeriLN         RMSNorm before and after each sublayer
///   LNS            RMSNorm·1/√ℓ before each sublayer
///   DyT            DyT before each sublayer
///   BHyT           exact BHyT before attention, injected-variance BHyT before the MLP
///   BHyTStar       centered exact BHyT* before each sublayer
///   RMSNormApprox  RMSNorm before attention, injected-variance RMSNorm before the MLP
enum class Placement { PreLN, PeriLN, LNS, DyT, BHyT, BHyTStar, RMSNormApprox };

inline constexpr Placement kAllPlacements[] = {Placement::PreLN,    Placement::PeriLN,
                                               Placement::LNS,      Placement::DyT,
                                               Placement::BHyT,     Placement::BHyTStar,
                                               Placement::RMSNormApprox};

std::string_view to_string(Placement p);
Placement placement_from_string(std::string_view name);

/// Exact moment reductions one block performs in a forward pass.
std::size_t reductions_per_block(Placement p) noexcept;
/// Kind of the pre-head normalization for a placement.
NormKind final_norm_kind(Placement p) noexcept;

enum class AttentionMode { Softmax, Uniform };

std::string_view to_string(AttentionMode m);
AttentionMode attention_mode_from_string(std::string_view name);

/// Hyperparameters shared by all normalization sites of a model.
struct NormHyper {
  double lambda_attn = 2.0;
  double lambda_mlp = 1.0;
  double kappa = 10.0;
  double eps = 1e-8;
  ScaleGrad scale_grad = ScaleGrad::Differentiate;
  double alpha_dyt_attn = 1.0;
  double alpha_dyt_mlp = 0.5;
  double alpha_dyt_final = 0.5;
};

struct BlockDims {
  std::size_t d = 0;
  std::size_t d_v = 0;
  std::size_t d_m = 0;
  std::size_t n_heads = 1;
};

struct BlockWeights {
  Tensor w_q, w_k, w_v;  // [d x d_V]
  Tensor w_o;            // [d_V x d]
  Tensor w_1;            // [d x d_m]
  Tensor w_2;            // [d_m x d]
  NormConfig norm_attn;
  NormConfig norm_mlp;
  std::optional<NormConfig> post_norm_attn;
  std::optional<NormConfig> post_norm_mlp;
  std::size_t n_heads = 1;
  Activation activation = Activation::Tanh;
  AttentionMode attention = AttentionMode::Softmax;
  /// Bumped on every parameter update; traces taken at an older version are stale.
  std::uint64_t version = 0;

  std::size_t d() const { return w_v.rows(); }
  std::size_t d_v() const { return w_v.cols(); }
  std::size_t d_m() const { return w_1.cols(); }

  void validate(Placement placement) const;
};

/// Fresh block weights. Projections are N(0, init_std²); init_std ≤ 0 selects
/// 1/√fan_in. `layer_index` is the 1-based depth used by LNS.
BlockWeights init_block(const BlockDims& dims, Placement placement, int layer_index,
                        const NormHyper& hyper, RngStream& rng, double init_std);

/// Gradients with the same layout as BlockWeights.
struct BlockGrads {
  Tensor w_q, w_k, w_v, w_o, w_1, w_2;
  Tensor gamma_attn, gamma_mlp;
  Tensor gamma_post_attn, gamma_post_mlp;  // empty unless PeriLN
  double alpha_attn = 0.0;
  double alpha_mlp = 0.0;
  Tensor d_input;

  static BlockGrads zeros_like(const BlockWeights& w);
  /// this += other for every parameter gradient (d_input excluded).
  void accumulate(const BlockGrads& other);
};

/// Per-call options for the variance estimator path.
struct EstimatorContext {
  /// Cached attention-output estimate s̃²_h; computed on the spot when empty.
  std::optional<VarianceEstimate> attn_estimate;
  /// Use the exact second moment at the MLP site instead of the injected one.
  bool force_exact = false;
  /// Replaces the injected per-row variance; lets a finite-difference oracle
  /// hold the (stop-gradient) estimate fixed while inputs move.
  std::span<const double> frozen_injected;
  /// Compute magnitude/variance scalars into the trace.
  bool collect_stats = false;
};

struct AttentionCache {
  Tensor z, q, k, v;          // projections [T x d_V]
  std::vector<Tensor> probs;  // one [T x T] matrix per head
  Tensor concat;              // Σ_s P[t,s] V[s] per head, [T x d_V]
};

struct MlpCache {
  Tensor z, u, a;  // input, pre-activation, activation
};

struct BlockTrace {
  bool valid = false;
  std::uint64_t weights_version = 0;
  Placement placement = Placement::PreLN;

  Tensor x;
  Tensor z_attn, h_attn, x_prime, z_mlp, h_mlp, x_out;
  Tensor attn_raw, mlp_raw;  // sublayer outputs before any post-norm
  Tensor s_x2;               // [T] exact uncentered input moment (zero for DyT)
  /// Per-row variance handed to the MLP-site norm (empty when not injected).
  std::vector<double> injected_rows;
  /// s̃²_h, the closed-form attention-output variance used (0 when unused).
  double injected_var = 0.0;

  // Magnitude/variance statistics, filled when collect_stats is set.
  double mean_abs_attn = 0.0, variance_attn = 0.0;
  double mean_abs_mlp = 0.0, variance_mlp = 0.0;
  double mean_abs_out = 0.0, variance_out = 0.0;
  double injected_mean = 0.0, exact_x_prime_mean = 0.0;
  /// Uncentered correlation between the residual input and each sublayer output.
  double rho_attn = 0.0, rho_mlp = 0.0;

  NormCache norm_attn_cache, norm_mlp_cache, post_attn_cache, post_mlp_cache;
  AttentionCache attn_cache;
  MlpCache mlp_cache;
};

/// Causal attention of normalized input z; returns [T x d]. When `cache` is
/// given the intermediates needed by attention_backward are kept.
Tensor attention_forward(const Tensor& z, const BlockWeights& w, AttentionCache* cache = nullptr);
Tensor mlp_forward(const Tensor& z, const BlockWeights& w, MlpCache* cache = nullptr);
Tensor mlp_forward(const Tensor& z, const BlockWeights& w, Activation activation,
                   MlpCache* cache = nullptr);

/// Closed-form s̃²_h for the block's current weights and sequence length T.
VarianceEstimate block_attn_estimate(const BlockWeights& w, Placement placement, std::size_t t,
                                     std::int64_t step = 0);

Tensor block_forward(const Tensor& x, const BlockWeights& w, Placement placement,
                     const EstimatorContext& ctx, BlockTrace& trace);

/// Reverse pass; throws StateError if `trace` is invalid or was taken at a
/// different weight version.
BlockGrads block_backward(const BlockTrace& trace, const BlockWeights& w, const Tensor& grad_out);

}  // namespace bhyt
