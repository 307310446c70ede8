// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include "bhyt/layer_stats.hpp"

#include <cmath>

#include <fmt/format.h>

namespace bhyt {

std::string_view to_string(StatSite s) {
  switch (s) {
    case StatSite::PostAttn: return "post_attn";
    case StatSite::PostMlp: return "post_mlp";
    case StatSite::ResidualStream: return "residual_stream";
  }
  return "?";
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.17g}", v);
}

void write_layer_stats_header(std::ostream& out) {
  out << kLayerStatsSchema << '\n' << kLayerStatsHeader << '\n';
}

void write_layer_stats_row(std::ostream& out, const LayerStatsRecord& r) {
  out << r.run_id << ',' << r.step << ',' << r.layer << ',' << to_string(r.site) << ','
      << format_double(r.mean_abs) << ',' << format_double(r.variance) << ','
      << (r.injected_variance ? format_double(*r.injected_variance) : "") << ','
      << (r.exact_variance ? format_double(*r.exact_variance) : "") << '\n';
}

}  // namespace bhyt
