// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0
//
// Depth-wise variance propagation. The analytic engine applies the per-sublayer
// recursion s²_out = s²_in · δ(ρ, π) with π recomputed from the running state;
// the Monte-Carlo scan measures the same quantities on freshly initialized stacks.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bhyt/layer_stats.hpp"
#include "bhyt/norm_layers.hpp"
#include "bhyt/transformer_block.hpp"

namespace bhyt {

enum class Bound { Lower, Upper, Point };
enum class Site { Attn, Mlp };

std::string_view to_string(Bound b);
Bound bound_from_string(std::string_view name);

struct GainParams {
  double c_attn = 0.0;      // ‖W_V W_O‖_F² / (T·d)
  double c_mlp = 0.0;       // τ·‖W₁W₂‖_F² / d
  double gamma_bar2 = 1.0;  // mean γ²
  double rho1 = 0.0;
  double rho2 = 0.0;
  double lambda_attn = 2.0;
  double lambda_mlp = 1.0;
  double kappa = 10.0;

  void validate() const;
};

/// δ(ρ, π) = 1 + π + 2ρ√π.
double amplification_delta(double rho, double pi);

/// Per-sublayer gain π for RMSNorm, LNS (Point only) and BHyT (any bound).
double pi_gain(NormKind kind, const GainParams& params, double s2_in, int layer_index, Site site,
               Bound bound);

struct VarianceTrajectory {
  NormKind kind = NormKind::BHyT;
  Bound bound = Bound::Point;
  std::vector<double> s2_x;        // s²_{x_ℓ}, ℓ = 1..L
  std::vector<double> s2_x_prime;  // s²_{x'_ℓ}, ℓ = 1..L
  /// Final block output s²_{x_{L+1}}.
  double s2_out = 0.0;
};

/// Runs the recursion for L blocks starting from s²_{x_1} = s2_init.
VarianceTrajectory propagate_variance(std::size_t L, const GainParams& params, double s2_init,
                                      NormKind kind, Bound bound);
/// Same with one GainParams per block.
VarianceTrajectory propagate_variance(std::span<const GainParams> per_layer, double s2_init,
                                      NormKind kind, Bound bound);

/// Recursion driven by an arbitrary gain function π(site, ℓ, s²).
using GainFn = std::function<double(Site, std::size_t, double)>;
VarianceTrajectory propagate_with_gain(std::size_t L, double s2_init, double rho1, double rho2,
                                       const GainFn& gain);

/// True iff λ/κ < 1/√L, decided exactly (λ²·L < κ² over rationals).
bool finite_depth_bound_check(double lambda, double kappa, std::size_t L);

/// Exact-arithmetic comparison of the BHyT-Upper and LNS trajectories at ρ = 0.
struct ExactDepthComparison {
  bool strictly_below = true;
  /// First layer where BHyT ≥ LNS (0 if none); `at_prime` tells which state.
  std::size_t first_violation = 0;
  bool at_prime = false;
  /// Per-sublayer multiplier inequality δ(0, π_BHyT) < δ(0, π_LNS) at matched state.
  bool multipliers_below = true;
};

/// Compares states x'_ℓ for ℓ = 1..L and x_ℓ for ℓ = 2..L+1 (x_1 is shared).
ExactDepthComparison compare_bhyt_lns_exact(std::size_t L, const GainParams& params,
                                            double s2_init);

/// Statistics of one block in a Monte-Carlo scan.
struct ScanLayer {
  std::size_t layer = 0;
  double s2_x = 0.0, s2_x_prime = 0.0, s2_out = 0.0;
  double mean_abs_x = 0.0, mean_abs_x_prime = 0.0, mean_abs_out = 0.0;
  double rho_attn = 0.0, rho_mlp = 0.0;
  GainParams gains;          // measured from this block's weights
  double injected_mean = 0;  // mean injected variance at the MLP norm (BHyT only)
  bool diverged = false;
};

struct ScanRun {
  std::uint64_t seed = 0;
  Placement placement = Placement::BHyT;
  std::vector<ScanLayer> layers;
  /// 1-based layer where a non-finite value appeared (0 if none).
  std::size_t diverged_at = 0;
};

struct ScanDims {
  std::size_t d = 128;
  std::size_t d_m = 512;
  std::size_t seq_len = 128;
  std::size_t n_heads = 1;
  Activation activation = Activation::Tanh;
  AttentionMode attention = AttentionMode::Softmax;
  NormHyper hyper;
  /// τ used for C_MLP; ≤ 0 calibrates it from the activation at s_u² = λ_MLP²/κ².
  double tau = 0.0;
  /// Projection std; ≤ 0 selects 1/√fan_in.
  double init_std = -1.0;
  /// Zero every projection (degenerate flat-trajectory check).
  bool zero_weights = false;
};

/// Effective 1/T of causal averaging: mean over t of 1/t.
double causal_inverse_length(std::size_t seq_len);

/// τ actually used by a scan with these dims.
double scan_tau(const ScanDims& dims);

/// Pushes N(0, 1) tokens through L fresh blocks per seed. Weights and inputs
/// depend only on (seed, layer), so placements are compared on paired draws.
std::vector<ScanRun> monte_carlo_depth_scan(std::size_t L, Placement placement,
                                            const ScanDims& dims,
                                            std::span<const std::uint64_t> seeds);

/// LayerStatsRecord rows (three sites per layer) for a scan run.
std::vector<LayerStatsRecord> scan_records(const ScanRun& run, const std::string& run_id);

/// Analytic Lower/Upper trajectories matched to one BHyT scan run.
struct Bracket {
  VarianceTrajectory lower, upper;
};

/// `measured_rho` feeds each block's measured correlations into the recursion;
/// otherwise ρ = 0.
Bracket bracket_for_run(const ScanRun& run, bool measured_rho);
/// Same with fixed correlations ρ₁ (attention) and ρ₂ (MLP) at every block.
Bracket bracket_for_run(const ScanRun& run, double rho1, double rho2);

/// Fraction of (layer, state) points of `run` inside its bracket, over the
/// block outputs x_{ℓ+1}, ℓ = 1..L.
double bracket_coverage(const ScanRun& run, const Bracket& bracket);

double median(std::vector<double> values);

}  // namespace bhyt
