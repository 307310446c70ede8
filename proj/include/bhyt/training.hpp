// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0
//
// Byte-level toy language-model training: corpus loading, batch sampling,
// AdamW/SGD with warmup and cosine decay, divergence detection, estimator
// refresh and periodic layer statistics.

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bhyt/layer_stats.hpp"
#include "bhyt/model.hpp"
#include "bhyt/rng.hpp"

namespace bhyt {

/// Path of the bundled corpus in the source tree.
std::filesystem::path default_corpus_path();

/// Byte-level token stream split into a leading train region and a trailing
/// eval region.
struct TokenCorpus {
  std::vector<int> train;
  std::vector<int> eval;
};

/// Reads `path` as raw bytes (vocab 256) and splits it `1 - eval_fraction` /
/// `eval_fraction`. Throws IoError when the file is missing or empty.
TokenCorpus make_toy_corpus(const std::filesystem::path& path, double eval_fraction = 0.05);

/// Draws random windows of length seq_len + 1 from one token region.
class BatchSampler {
 public:
  BatchSampler(std::span<const int> tokens, std::size_t seq_len, std::size_t batch_size,
               RngStream rng);

  /// Start offsets of the next batch; every window lies inside the region.
  std::vector<std::size_t> next_offsets();
  std::vector<std::vector<int>> next_batch();

  std::size_t window() const noexcept { return seq_len_ + 1; }

 private:
  std::span<const int> tokens_;
  std::size_t seq_len_;
  std::size_t batch_size_;
  RngStream rng_;
};

/// `count` evenly spaced, non-overlapping windows of length seq_len + 1.
std::vector<std::vector<int>> fixed_windows(std::span<const int> tokens, std::size_t seq_len,
                                            std::size_t count);

enum class OptimizerKind { SGD, AdamW };

std::string_view to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view name);

struct TrainConfig {
  std::size_t n_layers = 2;
  std::size_t d = 32;
  std::size_t d_v = 32;
  std::size_t d_m = 128;
  std::size_t seq_len = 32;
  std::size_t n_heads = 1;
  Activation activation = Activation::Tanh;
  std::size_t batch_size = 8;
  std::int64_t steps = 2000;
  double lr = 1e-3;
  double warmup_ratio = 0.05;
  double weight_decay = 0.01;
  double min_lr_ratio = 0.1;
  OptimizerKind optimizer = OptimizerKind::AdamW;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  Placement placement = Placement::BHyT;
  NormHyper norm;
  std::uint64_t seed = 0;
  /// Layer statistics every this many steps; 0 disables logging.
  std::int64_t stats_interval = 0;
  /// Attention-estimate refresh interval for the injected-variance placements.
  std::int64_t refresh_interval = 100;
  /// Eval loss every this many steps (and always at the end); 0 means end only.
  std::int64_t eval_interval = 0;
  std::size_t eval_windows = 32;
  double init_std = 0.02;
  /// Divergence: non-finite loss, or loss above `divergence_factor` times the
  /// initial loss at a check every `divergence_check_interval` steps.
  double divergence_factor = 10.0;
  std::int64_t divergence_check_interval = 10;
  std::filesystem::path corpus_path;
  std::string run_id = "run";

  void validate() const;
  ModelConfig model_config() const;
};

/// Learning rate at 0-based `step`: linear warmup to the peak over
/// round(warmup_ratio·steps) steps, then cosine decay to min_lr_ratio·peak.
double learning_rate_at(const TrainConfig& cfg, std::int64_t step);

struct EvalPoint {
  std::int64_t step = 0;
  double loss = 0.0;
};

struct TrainReport {
  std::string run_id;
  Placement placement = Placement::BHyT;
  std::uint64_t seed = 0;
  double lr = 0.0;
  std::vector<double> train_loss;  // one per completed step
  std::vector<EvalPoint> eval;     // includes step 0 and the final step
  double initial_eval_loss = 0.0;
  double final_eval_loss = 0.0;
  double final_perplexity = 0.0;
  std::vector<LayerStatsRecord> layer_stats;
  bool diverged = false;
  std::int64_t diverged_at_step = -1;
  std::int64_t steps_completed = 0;
  std::int64_t estimator_refreshes = 0;
  /// Exact moment reductions per sequence forward pass, measured.
  std::uint64_t reductions_per_forward = 0;
  double wall_seconds = 0.0;
  /// Wall time of each optimizer step (forward, backward, update).
  std::vector<double> step_seconds;
  double mean_step_seconds = 0.0;
  double median_step_seconds = 0.0;
  std::string init_scheme;

  double initial_train_loss() const;
  double final_train_loss() const;
};

/// Step-by-step training. `corpus` must outlive the trainer. Two trainers can
/// be advanced in lockstep so that their step timings share machine conditions.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const TokenCorpus& corpus);

  /// Runs one optimizer step; false once training has finished or diverged.
  bool step();
  bool done() const;
  /// Runs any remaining steps, evaluates, and returns the report.
  TrainReport finish();

  const Model& model() const noexcept { return model_; }
  std::int64_t steps_done() const noexcept { return step_; }

 private:
  using Clock = std::chrono::steady_clock;

  ForwardOptions options() const;
  void log_stats(std::int64_t step);
  void mark_diverged(std::int64_t step);

  TrainConfig cfg_;
  Clock::time_point wall0_;
  RngStream root_;
  Model model_;
  BatchSampler sampler_;
  std::vector<std::vector<int>> eval_set_;
  bool injected_;
  std::vector<VarianceEstimate> estimates_;
  std::vector<std::vector<double>> m1_, m2_;
  TrainReport rep_;
  std::int64_t step_ = 0;
  double reference_loss_ = 0.0;
};

/// Trains on `corpus`; deterministic for a fixed config.
TrainReport train(const TrainConfig& cfg, const TokenCorpus& corpus);
/// Loads the corpus from cfg.corpus_path (or the bundled one) and trains.
TrainReport train(const TrainConfig& cfg);

/// Layer statistics of one forward trace (three sites per block).
std::vector<LayerStatsRecord> trace_records(const ModelTrace& trace, Placement placement,
                                            const std::string& run_id, std::int64_t step);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t params_checked = 0;
};

/// Fourth-order central differences of the sequence loss against model_backward
/// for every parameter. The per-tensor error is ‖g − ĝ‖₂ / max(‖g‖₂, ‖ĝ‖₂);
/// injected variances are held at their analytic-pass values.
GradCheckResult grad_check_model(const ModelConfig& cfg, double eps, std::uint64_t seed);

}  // namespace bhyt
