// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0
//
// Single-precision forward and greedy-generation microbenchmarks over the
// normalization placements. Weights and inputs are shared across placements
// (only normalization parameters differ) so that timings are paired.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bhyt/model.hpp"

namespace bhyt {

struct BenchDims {
  std::size_t seq_len = 1024;
  std::size_t d = 512;
  std::size_t n_layers = 16;
  /// MLP width; 0 selects 4·d.
  std::size_t d_m = 0;
  std::size_t n_heads = 1;
  std::size_t vocab = 256;

  std::size_t mlp_width() const noexcept { return d_m ? d_m : 4 * d; }
  void validate() const;
};

struct BenchOptions {
  std::size_t iterations = 30;
  std::size_t warmup = 5;
  /// BLAS threads; acceptance runs use one.
  int threads = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class BenchMode { Forward, Generate };

std::string_view to_string(BenchMode m);

struct BenchResult {
  Placement placement = Placement::BHyT;
  BenchMode mode = BenchMode::Forward;
  BenchDims dims;
  std::size_t iterations = 0;
  std::size_t warmup = 0;
  int threads = 1;
  /// Wall time per timed iteration, in seconds, in execution order.
  std::vector<double> samples;
  double median_seconds = 0.0;
  double p10_seconds = 0.0;
  double p90_seconds = 0.0;
  double mean_seconds = 0.0;
  /// Generation only.
  std::size_t prompt_len = 0;
  std::size_t new_tokens = 0;
  double tokens_per_second = 0.0;
  std::vector<int> generated;
  std::string blas_core;
  double timer_resolution_seconds = 0.0;
  /// Set when the clock resolution exceeds 1% of the median.
  std::optional<std::string> warning;
};

/// Name of the BLAS kernel set in use.
std::string blas_core_name();

/// When OPENBLAS_CORETYPE is unset and BLAS picked a kernel set older than
/// the host's AVX2 or AVX-512 support, sets the variable and re-executes the
/// current program. Returns normally otherwise, or when exec fails.
void select_blas_core(char** argv);

/// Fills median/p10/p90/mean from `samples` (linear-interpolated quantiles).
void summarize(BenchResult& r);

/// Smallest observable positive step of the monotonic clock, in seconds.
double timer_resolution();

/// Float copy of a model with its forward pass on BLAS kernels. Copies share
/// their weight buffers and workspace, so they must not run concurrently.
class BenchModel {
 public:
  explicit BenchModel(const Model& m);
  /// Reuses the projection, embedding and head buffers and the workspace of
  /// `share`, whose model must hold bit-identical copies of those weights.
  BenchModel(const Model& m, const BenchModel& share);

  /// Logits [n x vocab] (row-major) for n ≤ seq_len tokens.
  std::vector<float> forward(std::span<const int> tokens);
  /// Logits of the last position only.
  std::vector<float> forward_last(std::span<const int> tokens);
  /// Greedy decoding with a full recompute per token; the context keeps the
  /// most recent seq_len tokens.
  std::vector<int> generate(std::span<const int> prompt, std::size_t new_tokens);

  Placement placement() const noexcept { return placement_; }
  std::size_t n_layers() const noexcept { return blocks_.size(); }

 private:
  struct Norm {
    NormKind kind = NormKind::RMSNorm;
    float lambda = 1.0f, kappa = 10.0f, eps = 1e-8f, alpha = 1.0f, depth = 1.0f;
    std::vector<float> gamma;
  };
  struct Matrices {
    std::vector<float> w_q, w_k, w_v, w_o, w_1, w_2;
  };
  struct Weights {
    std::vector<float> tok_emb, pos_emb, head;
    std::vector<Matrices> blocks;
  };
  struct Workspace {
    std::vector<float> x, z, q, k, v, scores, concat, sub, u, moment, injected;
  };
  struct Block {
    Norm norm_attn, norm_mlp;
    std::optional<Norm> post_attn, post_mlp;
    float attn_estimate = 0.0f;
  };

  void init_norms(const Model& m);
  void run(std::span<const int> tokens, bool last_only, std::vector<float>& logits);
  void apply_norm(const Norm& n, const float* x, float* y, std::size_t rows,
                  const float* injected, float* moment_out);
  void block_forward(const Block& b, const Matrices& w, std::size_t t);

  Placement placement_;
  std::size_t d_, d_v_, d_m_, heads_, vocab_, seq_len_;
  Activation activation_;
  AttentionMode attention_;
  std::shared_ptr<const Weights> weights_;
  std::shared_ptr<Workspace> ws_;
  std::vector<Block> blocks_;
  Norm final_norm_;
};

/// Model with paired weights for `placement`: projections, embeddings and head
/// depend only on (seed, dims). L = 0 gives an embedding-and-head model.
Model bench_model(Placement placement, const BenchDims& dims, std::uint64_t seed);

/// Times full forward passes on one shared random input.
BenchResult bench_forward(Placement placement, const BenchDims& dims, const BenchOptions& opts);

/// Times several placements with iterations interleaved round-robin so that
/// machine drift affects every placement alike.
std::vector<BenchResult> bench_forward_paired(std::span<const Placement> placements,
                                              const BenchDims& dims, const BenchOptions& opts);

/// Times greedy generation of `new_tokens` after a random prompt of
/// `prompt_len` tokens; one iteration is one complete generation.
BenchResult bench_generate(Placement placement, std::size_t prompt_len, std::size_t new_tokens,
                           const BenchDims& dims, const BenchOptions& opts);

std::vector<BenchResult> bench_generate_paired(std::span<const Placement> placements,
                                               std::size_t prompt_len, std::size_t new_tokens,
                                               const BenchDims& dims, const BenchOptions& opts);

}  // namespace bhyt
