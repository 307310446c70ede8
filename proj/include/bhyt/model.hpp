// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0
//
// Byte-level decoder-only language model: token and learned position
// embeddings, a stack of blocks, a final normalization and a linear head.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bhyt/transformer_block.hpp"

namespace bhyt {

struct ModelConfig {
  std::size_t vocab = 256;
  std::size_t n_layers = 2;
  std::size_t d = 32;
  std::size_t d_v = 32;
  std::size_t d_m = 128;
  std::size_t seq_len = 32;
  std::size_t n_heads = 1;
  Activation activation = Activation::Tanh;
  AttentionMode attention = AttentionMode::Softmax;
  Placement placement = Placement::BHyT;
  NormHyper norm;
  /// Projection and embedding std; ≤ 0 selects 1/√fan_in for projections.
  double init_std = 0.02;
  /// Start the head at zero so the initial prediction is uniform.
  bool zero_head = true;

  void validate() const;
  BlockDims block_dims() const { return {d, d_v, d_m, n_heads}; }
};

struct Model {
  ModelConfig cfg;
  Tensor tok_emb;  // [vocab x d]
  Tensor pos_emb;  // [seq_len x d]
  std::vector<BlockWeights> blocks;
  NormConfig final_norm;
  Tensor head;  // [d x vocab]

  /// Marks every block as updated so older traces become stale.
  void bump_version();
};

Model init_model(const ModelConfig& cfg, RngStream& rng);

struct ForwardOptions {
  /// One cached s̃²_h per block, or empty to compute fresh estimates.
  std::span<const VarianceEstimate> attn_estimates;
  /// One frozen per-row injected vector per block, or empty.
  std::span<const std::vector<double>> frozen_injected;
  bool force_exact = false;
  bool collect_stats = false;
};

struct ModelTrace {
  std::vector<int> tokens;
  Tensor x0;
  std::vector<BlockTrace> blocks;
  Tensor x_final;
  Tensor z_final;
  NormCache final_cache;
  Tensor logits;
};

/// Logits [n x vocab] for n ≤ seq_len input tokens.
Tensor model_forward(const Model& m, std::span<const int> tokens, const ForwardOptions& opts,
                     ModelTrace* trace = nullptr);

struct ModelGrads {
  Tensor tok_emb, pos_emb, head, final_gamma;
  double final_alpha = 0.0;
  std::vector<BlockGrads> blocks;

  static ModelGrads zeros_like(const Model& m);
  void accumulate(const ModelGrads& other);
  void scale_by(double s);
};

ModelGrads model_backward(const Model& m, const ModelTrace& trace, const Tensor& d_logits);

/// Mean next-token cross-entropy of `seq` (inputs seq[0..n-1], targets
/// seq[1..n]). When `d_logits` is given it receives ∂loss/∂logits.
double sequence_loss(const Model& m, std::span<const int> seq, const ForwardOptions& opts,
                     ModelTrace* trace = nullptr, Tensor* d_logits = nullptr);

struct LossAndGrads {
  double loss = 0.0;
  ModelGrads grads;
};

/// Mean loss and gradient over a batch of equal-length sequences.
LossAndGrads batch_loss_and_grads(const Model& m, const std::vector<std::vector<int>>& batch,
                                  const ForwardOptions& opts);
double batch_loss(const Model& m, const std::vector<std::vector<int>>& batch,
                  const ForwardOptions& opts);

/// A trainable tensor paired with its gradient.
struct ParamRef {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
  bool decay = false;
};

/// Every trainable parameter in a fixed order.
std::vector<ParamRef> parameter_refs(Model& m, ModelGrads& g);

}  // namespace bhyt
