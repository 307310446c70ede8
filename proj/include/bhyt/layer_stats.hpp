// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

namespace bhyt {

/// Where in a block a statistic was taken.
///   ResidualStream  block input x_ℓ
///   PostAttn        x'_ℓ = x_ℓ + h_Attn
///   PostMlp         block output x'_ℓ + h_MLP
enum class StatSite { PostAttn, PostMlp, ResidualStream };

std::string_view to_string(StatSite s);

struct LayerStatsRecord {
  std::string run_id;
  std::int64_t step = 0;
  std::size_t layer = 0;
  StatSite site = StatSite::ResidualStream;
  double mean_abs = 0.0;
  double variance = 0.0;
  std::optional<double> injected_variance;
  std::optional<double> exact_variance;
};

inline constexpr std::string_view kLayerStatsSchema = "# schema: bhyt.layer_stats.v1";
inline constexpr std::string_view kLayerStatsHeader =
    "run_id,step,layer,site,mean_abs,variance,injected_variance,exact_variance";

/// Round-trip decimal formatting used by every CSV writer.
std::string format_double(double v);

void write_layer_stats_header(std::ostream& out);
void write_layer_stats_row(std::ostream& out, const LayerStatsRecord& r);

}  // namespace bhyt
