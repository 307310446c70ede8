// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: a JSON document with fixed sections. Parsing is
// strict: unknown keys, wrong types and out-of-range values raise ConfigError
// naming the offending field (or the line and column of a syntax error).

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bhyt/bench.hpp"
#include "bhyt/bounds.hpp"
#include "bhyt/depth_analysis.hpp"
#include "bhyt/training.hpp"
#include "bhyt/var_accuracy.hpp"

namespace bhyt {

struct ModelSection {
  std::size_t n_layers = 2;  // "L"
  std::size_t d = 32;
  std::size_t d_v = 32;  // "d_V"
  std::size_t d_m = 128;
  std::size_t seq_len = 32;  // "T"
  std::size_t n_heads = 1;   // "heads"
  Activation activation = Activation::Tanh;
};

struct NormSection {
  Placement kind = Placement::BHyT;
  NormHyper hyper;
  std::int64_t refresh_interval = 100;
};

struct TrainSection {
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
  double init_std = 0.02;
  std::int64_t stats_interval = 100;
  std::int64_t eval_interval = 0;
  std::size_t eval_windows = 32;
  double divergence_factor = 10.0;
  std::int64_t divergence_check_interval = 10;
  std::string corpus;  // empty selects the bundled corpus
};

struct BenchSection {
  std::vector<Placement> placements = {Placement::DyT, Placement::BHyT, Placement::PreLN,
                                       Placement::PeriLN};
  BenchDims dims;
  std::size_t iterations = 30;
  std::size_t warmup = 5;
  std::size_t repetitions = 5;
  int threads = 1;
  BenchMode mode = BenchMode::Forward;
  std::size_t prompt_len = 16;
  std::size_t new_tokens = 128;
};

struct DepthScanSection {
  std::vector<Placement> placements = {Placement::PreLN, Placement::PeriLN, Placement::LNS,
                                       Placement::DyT, Placement::BHyT};
  std::size_t n_layers = 16;  // "L"
  std::size_t seeds = 10;
  std::size_t d = 128;
  std::size_t d_m = 512;
  std::size_t seq_len = 128;  // "T"
  AttentionMode attention = AttentionMode::Softmax;
  /// Correlations fed to the analytic bracket; unset uses the measured ones.
  std::optional<double> rho1, rho2;
};

struct CheckBoundsSection {
  std::vector<double> lambdas = {1.0, 2.0};
  std::vector<double> kappas = {10.0};
  std::vector<std::size_t> depths = {1, 4, 16, 24};
  std::vector<double> probabilities = {0.99};
  std::vector<double> means = {0.0, 0.5, -2.0};
  std::vector<double> stds = {1.0, 1.3, 0.2};
  std::size_t coverage_samples = 100000;
  std::vector<double> tanh_lambdas = {1.0, 2.0};
  std::size_t tanh_samples = 1000000;
};

struct VarAccuracySection {
  VarAccuracyConfig cfg;
};

struct OutputSection {
  std::string directory = "out";
  bool csv = true;
  bool json = true;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  ModelSection model;
  NormSection norm;
  TrainSection train;
  BenchSection bench;
  DepthScanSection depth_scan;
  CheckBoundsSection check_bounds;
  VarAccuracySection var_accuracy;
  OutputSection output;

  TrainConfig train_config() const;
  ScanDims scan_dims() const;
  BenchOptions bench_options() const;
  /// Variance-accuracy settings with the top-level seed and norm hyperparameters.
  VarAccuracyConfig var_accuracy_config() const;
};

/// Parses a JSON document; `source` names it in error messages.
ExperimentConfig parse_config(std::string_view text, std::string_view source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON text of a configuration (every field, defaults included).
std::string config_to_json(const ExperimentConfig& cfg);

}  // namespace bhyt
