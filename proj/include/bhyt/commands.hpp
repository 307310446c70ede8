// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment subcommands. Each one computes all of its outputs in memory and
// then commits them to the output directory (temp file + rename per file), so
// a failing command leaves no partial files behind.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "bhyt/config.hpp"

namespace bhyt {

/// Command-line overrides applied on top of the configuration file.
struct CommandOptions {
  /// Empty selects the built-in defaults.
  std::filesystem::path config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
};

/// Loads the configuration and applies the overrides.
ExperimentConfig resolve_config(const CommandOptions& opts);

struct CommandResult {
  /// 0 on success, 1 when a check failed.
  int exit_code = 0;
  std::vector<std::filesystem::path> files;
};

/// Writes `content` to `path` through a sibling temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Chebyshev coverage grid, tanh variance bracket and the finite-depth grid.
/// Nonzero exit when any check fails.
CommandResult cmd_check_bounds(const ExperimentConfig& cfg, std::ostream& log);
/// One layer-stats CSV per placement plus an analytic-bracket CSV for BHyT.
CommandResult cmd_depth_scan(const ExperimentConfig& cfg, std::ostream& log);
/// Training report (JSON) and layer statistics (CSV).
CommandResult cmd_train(const ExperimentConfig& cfg, std::ostream& log);
/// Benchmark rows (JSON) and a summary table on `log`.
CommandResult cmd_bench(const ExperimentConfig& cfg, std::ostream& log);
/// Injected vs exact variance scatter (CSV) and agreement metrics (JSON).
CommandResult cmd_var_accuracy(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace bhyt
