// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include "bhyt/depth_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>

#include "bhyt/error.hpp"
#include "bhyt/rng.hpp"
#include "bhyt/variance_estimator.hpp"

namespace bhyt {

namespace {

using Rational = boost::multiprecision::cpp_rational;

double kind_factor(NormKind kind, const GainParams& p, int layer_index, Site site, Bound bound) {
  switch (kind) {
    case NormKind::RMSNorm:
      if (bound != Bound::Point) break;
      return 1.0;
    case NormKind::LNS:
      if (bound != Bound::Point) break;
      return 1.0 / static_cast<double>(layer_index);
    case NormKind::BHyT: {
      const double lambda = site == Site::Attn ? p.lambda_attn : p.lambda_mlp;
      const double up = lambda * lambda / (p.kappa * p.kappa);
      if (bound == Bound::Lower) {
        const double r = std::tanh(lambda) / lambda;
        return up * r * r;
      }
      return up;
    }
    default:
      throw ParameterError("pi_gain: no closed-form gain for " + std::string(to_string(kind)));
  }
  throw ParameterError("pi_gain: " + std::string(to_string(kind)) + " supports the point bound only");
}

}  // namespace

std::string_view to_string(Bound b) {
  switch (b) {
    case Bound::Lower: return "lower";
    case Bound::Upper: return "upper";
    case Bound::Point: return "point";
  }
  return "?";
}

Bound bound_from_string(std::string_view name) {
  for (Bound b : {Bound::Lower, Bound::Upper, Bound::Point}) {
    if (to_string(b) == name) return b;
  }
  throw ParameterError("unknown bound '" + std::string(name) + "'");
}

void GainParams::validate() const {
  if (!(c_attn >= 0.0) || !(c_mlp >= 0.0) || !(gamma_bar2 >= 0.0)) {
    throw ParameterError("gain params: C and gamma_bar2 must be non-negative");
  }
  if (!(std::abs(rho1) <= 1.0) || !(std::abs(rho2) <= 1.0)) {
    throw ParameterError("gain params: |rho| must not exceed 1");
  }
  if (!(kappa > 0.0) || !(lambda_attn >= 0.0) || !(lambda_mlp >= 0.0)) {
    throw ParameterError("gain params: kappa must be positive and lambdas non-negative");
  }
}

double amplification_delta(double rho, double pi) {
  if (!(pi >= 0.0)) {
    throw ParameterError("amplification_delta: pi must be non-negative");
  }
  return 1.0 + pi + 2.0 * rho * std::sqrt(pi);
}

double pi_gain(NormKind kind, const GainParams& params, double s2_in, int layer_index, Site site,
               Bound bound) {
  if (!(s2_in > 0.0)) {
    throw ParameterError("pi_gain: input variance must be positive");
  }
  if (layer_index < 1) {
    throw ParameterError("pi_gain: layer index must be >= 1");
  }
  const double c = site == Site::Attn ? params.c_attn : params.c_mlp;
  return c * params.gamma_bar2 * kind_factor(kind, params, layer_index, site, bound) / s2_in;
}

VarianceTrajectory propagate_with_gain(std::size_t L, double s2_init, double rho1, double rho2,
                                       const GainFn& gain) {
  if (L < 1) {
    throw ParameterError("propagate_variance: L must be >= 1");
  }
  if (!(s2_init > 0.0)) {
    throw ParameterError("propagate_variance: initial variance must be positive");
  }
  VarianceTrajectory tr;
  tr.s2_x.reserve(L);
  tr.s2_x_prime.reserve(L);
  double s = s2_init;
  for (std::size_t l = 1; l <= L; ++l) {
    tr.s2_x.push_back(s);
    s *= amplification_delta(rho1, gain(Site::Attn, l, s));
    if (!std::isfinite(s) || !(s > 0.0)) throw NumericError("propagate_variance", l);
    tr.s2_x_prime.push_back(s);
    s *= amplification_delta(rho2, gain(Site::Mlp, l, s));
    if (!std::isfinite(s) || !(s > 0.0)) throw NumericError("propagate_variance", l);
  }
  tr.s2_out = s;
  return tr;
}

VarianceTrajectory propagate_variance(std::span<const GainParams> per_layer, double s2_init,
                                      NormKind kind, Bound bound) {
  for (const GainParams& p : per_layer) p.validate();
  if (per_layer.empty()) {
    throw ParameterError("propagate_variance: L must be >= 1");
  }
  // ρ may differ per layer, so apply δ directly rather than through propagate_with_gain.
  VarianceTrajectory tr;
  tr.kind = kind;
  tr.bound = bound;
  if (!(s2_init > 0.0)) {
    throw ParameterError("propagate_variance: initial variance must be positive");
  }
  double s = s2_init;
  for (std::size_t l = 1; l <= per_layer.size(); ++l) {
    const GainParams& p = per_layer[l - 1];
    const int li = static_cast<int>(l);
    tr.s2_x.push_back(s);
    s *= amplification_delta(p.rho1, pi_gain(kind, p, s, li, Site::Attn, bound));
    if (!std::isfinite(s) || !(s > 0.0)) throw NumericError("propagate_variance", l);
    tr.s2_x_prime.push_back(s);
    s *= amplification_delta(p.rho2, pi_gain(kind, p, s, li, Site::Mlp, bound));
    if (!std::isfinite(s) || !(s > 0.0)) throw NumericError("propagate_variance", l);
  }
  tr.s2_out = s;
  return tr;
}

VarianceTrajectory propagate_variance(std::size_t L, const GainParams& params, double s2_init,
                                      NormKind kind, Bound bound) {
  if (L < 1) {
    throw ParameterError("propagate_variance: L must be >= 1");
  }
  const std::vector<GainParams> per_layer(L, params);
  return propagate_variance(per_layer, s2_init, kind, bound);
}

bool finite_depth_bound_check(double lambda, double kappa, std::size_t L) {
  if (L < 1) {
    throw ParameterError("finite_depth_bound_check: L must be >= 1");
  }
  if (!(kappa > 0.0) || !std::isfinite(lambda)) {
    throw ParameterError("finite_depth_bound_check: kappa must be positive");
  }
  const Rational lam(lambda), kap(kappa);
  return lam * lam * Rational(L) < kap * kap;
}

ExactDepthComparison compare_bhyt_lns_exact(std::size_t L, const GainParams& params,
                                            double s2_init) {
  params.validate();
  if (params.rho1 != 0.0 || params.rho2 != 0.0) {
    throw ParameterError("compare_bhyt_lns_exact: exact comparison needs rho = 0");
  }
  if (L < 1 || !(s2_init > 0.0)) {
    throw ParameterError("compare_bhyt_lns_exact: need L >= 1 and positive initial variance");
  }
  const Rational ca(params.c_attn), cm(params.c_mlp), g2(params.gamma_bar2);
  const Rational la(params.lambda_attn), lm(params.lambda_mlp), k(params.kappa);
  const Rational fa = la * la / (k * k), fm = lm * lm / (k * k);

  ExactDepthComparison out;
  Rational sb(s2_init), sl(s2_init);
  const auto note = [&](std::size_t l, bool prime) {
    if (out.strictly_below) {
      out.strictly_below = false;
      out.first_violation = l;
      out.at_prime = prime;
    }
  };
  for (std::size_t l = 1; l <= L; ++l) {
    const Rational inv_l(1, static_cast<long long>(l));
    // Attention sublayer: s ← s·(1 + π) with π from the running state.
    const Rational pi_b_attn = ca * g2 * fa / sb;
    const Rational pi_l_attn_matched = ca * g2 * inv_l / sb;
    if (ca * g2 > 0 && !(pi_b_attn < pi_l_attn_matched)) out.multipliers_below = false;
    sb = sb * (1 + pi_b_attn);
    sl = sl * (1 + ca * g2 * inv_l / sl);
    if (!(sb < sl)) note(l, true);

    const Rational pi_b_mlp = cm * g2 * fm / sb;
    const Rational pi_l_mlp_matched = cm * g2 * inv_l / sb;
    if (cm * g2 > 0 && !(pi_b_mlp < pi_l_mlp_matched)) out.multipliers_below = false;
    sb = sb * (1 + pi_b_mlp);
    sl = sl * (1 + cm * g2 * inv_l / sl);
    if (!(sb < sl)) note(l + 1, false);
  }
  return out;
}

double causal_inverse_length(std::size_t seq_len) {
  if (seq_len == 0) {
    throw DimensionError("causal_inverse_length: T must be positive");
  }
  double acc = 0.0;
  for (std::size_t t = 1; t <= seq_len; ++t) acc += 1.0 / static_cast<double>(t);
  return acc / static_cast<double>(seq_len);
}

double scan_tau(const ScanDims& dims) {
  if (dims.tau > 0.0) return dims.tau;
  RngStream rng(0x7A0C0DE);
  const double s_u = dims.hyper.lambda_mlp / dims.hyper.kappa;
  return calibrate_tau(dims.activation, s_u * s_u, 200000, rng);
}

std::vector<ScanRun> monte_carlo_depth_scan(std::size_t L, Placement placement,
                                            const ScanDims& dims,
                                            std::span<const std::uint64_t> seeds) {
  if (L < 1) {
    throw ParameterError("monte_carlo_depth_scan: L must be >= 1");
  }
  if (dims.d == 0 || dims.d_m == 0 || dims.seq_len == 0) {
    throw DimensionError("monte_carlo_depth_scan: dimensions must be positive");
  }
  const double tau = scan_tau(dims);
  const double inv_t = causal_inverse_length(dims.seq_len);
  const double d = static_cast<double>(dims.d);

  std::vector<ScanRun> runs;
  runs.reserve(seeds.size());
  for (std::uint64_t seed : seeds) {
    ScanRun run;
    run.seed = seed;
    run.placement = placement;
    const RngStream root(seed);
    RngStream input_rng = root.split(0xD0);
    Tensor x = gaussian({dims.seq_len, dims.d}, input_rng, 1.0);

    for (std::size_t l = 1; l <= L; ++l) {
      ScanLayer row;
      row.layer = l;
      if (run.diverged_at != 0) {
        row.diverged = true;
        row.s2_x = row.s2_x_prime = row.s2_out = std::numeric_limits<double>::infinity();
        row.mean_abs_x = row.mean_abs_x_prime = row.mean_abs_out = row.s2_x;
        run.layers.push_back(row);
        continue;
      }
      RngStream layer_rng = root.split(l);
      BlockWeights w = init_block({dims.d, dims.d, dims.d_m, dims.n_heads}, placement,
                                  static_cast<int>(l), dims.hyper, layer_rng, dims.init_std);
      w.activation = dims.activation;
      w.attention = dims.attention;
      if (dims.zero_weights) {
        for (Tensor* t : {&w.w_q, &w.w_k, &w.w_v, &w.w_o, &w.w_1, &w.w_2}) t->fill(0.0);
      }

      row.gains.c_attn = frobenius_norm_sq(matmul(w.w_v, w.w_o)) / d * inv_t;
      row.gains.c_mlp = tau * frobenius_norm_sq(matmul(w.w_1, w.w_2)) / d;
      row.gains.gamma_bar2 = mean_square(w.norm_attn.gamma);
      row.gains.lambda_attn = dims.hyper.lambda_attn;
      row.gains.lambda_mlp = dims.hyper.lambda_mlp;
      row.gains.kappa = dims.hyper.kappa;

      row.s2_x = mean_square(x);
      row.mean_abs_x = mean_abs(x);
      EstimatorContext ctx;
      ctx.collect_stats = true;
      BlockTrace trace;
      try {
        x = block_forward(x, w, placement, ctx, trace);
        row.s2_x_prime = trace.exact_x_prime_mean;
        row.mean_abs_x_prime = mean_abs(trace.x_prime);
        row.s2_out = trace.variance_out;
        row.mean_abs_out = trace.mean_abs_out;
        row.rho_attn = trace.rho_attn;
        row.rho_mlp = trace.rho_mlp;
        row.injected_mean = trace.injected_mean;
        if (!std::isfinite(row.s2_out)) throw NumericError("block output", l);
      } catch (const NumericError&) {
        run.diverged_at = l;
        row.diverged = true;
        row.s2_x_prime = row.s2_out = std::numeric_limits<double>::infinity();
        row.mean_abs_x_prime = row.mean_abs_out = row.s2_out;
      }
      run.layers.push_back(row);
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

std::vector<LayerStatsRecord> scan_records(const ScanRun& run, const std::string& run_id) {
  std::vector<LayerStatsRecord> out;
  const bool injected = run.placement == Placement::BHyT ||
                        run.placement == Placement::RMSNormApprox;
  for (const ScanLayer& l : run.layers) {
    LayerStatsRecord base;
    base.run_id = run_id;
    base.layer = l.layer;
    LayerStatsRecord res = base, attn = base, mlp = base;
    res.site = StatSite::ResidualStream;
    res.mean_abs = l.mean_abs_x;
    res.variance = l.s2_x;
    attn.site = StatSite::PostAttn;
    attn.mean_abs = l.mean_abs_x_prime;
    attn.variance = l.s2_x_prime;
    attn.exact_variance = l.s2_x_prime;
    if (injected && !l.diverged) attn.injected_variance = l.injected_mean;
    mlp.site = StatSite::PostMlp;
    mlp.mean_abs = l.mean_abs_out;
    mlp.variance = l.s2_out;
    out.push_back(res);
    out.push_back(attn);
    out.push_back(mlp);
  }
  return out;
}

namespace {

Bracket bracket_with(const ScanRun& run,
                     const std::function<void(const ScanLayer&, GainParams&)>& set_rho) {
  if (run.layers.empty()) {
    throw ParameterError("bracket_for_run: empty scan");
  }
  if (run.diverged_at != 0) {
    throw NumericError("bracket_for_run: scan diverged", run.diverged_at);
  }
  std::vector<GainParams> per_layer;
  per_layer.reserve(run.layers.size());
  for (const ScanLayer& l : run.layers) {
    GainParams g = l.gains;
    set_rho(l, g);
    per_layer.push_back(g);
  }
  const double s2_init = run.layers.front().s2_x;
  return {propagate_variance(per_layer, s2_init, NormKind::BHyT, Bound::Lower),
          propagate_variance(per_layer, s2_init, NormKind::BHyT, Bound::Upper)};
}

}  // namespace

Bracket bracket_for_run(const ScanRun& run, bool measured_rho) {
  return bracket_with(run, [&](const ScanLayer& l, GainParams& g) {
    g.rho1 = measured_rho ? l.rho_attn : 0.0;
    g.rho2 = measured_rho ? l.rho_mlp : 0.0;
  });
}

Bracket bracket_for_run(const ScanRun& run, double rho1, double rho2) {
  return bracket_with(run, [&](const ScanLayer&, GainParams& g) {
    g.rho1 = rho1;
    g.rho2 = rho2;
  });
}

double bracket_coverage(const ScanRun& run, const Bracket& b) {
  const std::size_t L = run.layers.size();
  std::size_t inside = 0;
  for (std::size_t i = 0; i < L; ++i) {
    const double lo = i + 1 < L ? b.lower.s2_x[i + 1] : b.lower.s2_out;
    const double hi = i + 1 < L ? b.upper.s2_x[i + 1] : b.upper.s2_out;
    const double mc = run.layers[i].s2_out;
    inside += lo <= mc && mc <= hi;
  }
  return static_cast<double>(inside) / static_cast<double>(L);
}

double median(std::vector<double> values) {
  if (values.empty()) {
    throw ParameterError("median: empty input");
  }
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace bhyt
