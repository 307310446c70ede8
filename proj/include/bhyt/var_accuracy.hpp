// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0
//
// Injected versus exactly measured variance at the MLP-site norm of a
// randomly initialized block stack.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "bhyt/stats.hpp"
#include "bhyt/transformer_block.hpp"

namespace bhyt {

struct VarAccuracyConfig {
  Placement placement = Placement::BHyT;
  std::size_t n_layers = 8;
  std::size_t d = 128;
  std::size_t d_v = 128;
  std::size_t d_m = 512;
  std::size_t seq_len = 256;
  std::size_t n_heads = 1;
  std::size_t n_inputs = 100;
  Activation activation = Activation::Tanh;
  AttentionMode attention = AttentionMode::Softmax;
  NormHyper hyper;
  /// Projection std; ≤ 0 selects 1/√fan_in.
  double init_std = -1.0;
  /// W_V = W_O = W_1 = W_2 = I and W_Q = W_K = 0 (requires d = d_v = d_m).
  bool identity_weights = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One scatter point: row-mean injected and exact second moment of x' at one
/// layer for one input.
struct VarPoint {
  std::size_t input = 0;
  std::size_t layer = 0;
  double injected = 0.0;
  double exact = 0.0;
};

struct VarAccuracyResult {
  std::vector<VarPoint> points;
  /// Injected as the prediction of exact.
  AgreementMetrics metrics;
};

/// One weight stack, `n_inputs` N(0, 1) inputs of shape [seq_len x d].
VarAccuracyResult variance_accuracy(const VarAccuracyConfig& cfg);

}  // namespace bhyt
