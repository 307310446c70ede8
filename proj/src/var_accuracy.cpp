// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include "bhyt/var_accuracy.hpp"

#include "bhyt/error.hpp"
#include "bhyt/numerics.hpp"
#include "bhyt/rng.hpp"

namespace bhyt {

void VarAccuracyConfig::validate() const {
  if (placement != Placement::BHyT && placement != Placement::RMSNormApprox) {
    throw ParameterError("variance accuracy needs an injected-variance placement, got " +
                         std::string(to_string(placement)));
  }
  if (n_layers == 0 || d == 0 || d_v == 0 || d_m == 0 || seq_len == 0) {
    throw DimensionError("variance accuracy dimensions must be positive");
  }
  if (n_inputs == 0) throw ParameterError("variance accuracy needs at least one input");
  if (identity_weights && (d_v != d || d_m != d || n_heads != 1)) {
    throw DimensionError("identity weights need d = d_v = d_m and one head");
  }
}

VarAccuracyResult variance_accuracy(const VarAccuracyConfig& cfg) {
  cfg.validate();
  const RngStream root(cfg.seed);
  RngStream weight_rng = root.split(1);
  const BlockDims dims{cfg.d, cfg.d_v, cfg.d_m, cfg.n_heads};

  std::vector<BlockWeights> blocks;
  blocks.reserve(cfg.n_layers);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    BlockWeights w = init_block(dims, cfg.placement, static_cast<int>(l + 1), cfg.hyper,
                                weight_rng, cfg.init_std);
    w.activation = cfg.activation;
    w.attention = cfg.attention;
    if (cfg.identity_weights) {
      w.w_q = Tensor({cfg.d, cfg.d});
      w.w_k = Tensor({cfg.d, cfg.d});
      w.w_v = w.w_o = w.w_1 = w.w_2 = Tensor::identity(cfg.d);
    }
    blocks.push_back(std::move(w));
  }

  VarAccuracyResult out;
  out.points.reserve(cfg.n_inputs * cfg.n_layers);
  EstimatorContext ctx;
  ctx.collect_stats = true;
  for (std::size_t i = 0; i < cfg.n_inputs; ++i) {
    RngStream input_rng = root.split(2).split(i);
    Tensor x = gaussian({cfg.seq_len, cfg.d}, input_rng, 1.0);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      BlockTrace trace;
      x = block_forward(x, blocks[l], cfg.placement, ctx, trace);
      out.points.push_back({i, l + 1, trace.injected_mean, trace.exact_x_prime_mean});
    }
  }

  std::vector<double> injected, exact;
  for (const VarPoint& p : out.points) {
    injected.push_back(p.injected);
    exact.push_back(p.exact);
  }
  out.metrics = agreement(injected, exact);
  return out;
}

}  // namespace bhyt
