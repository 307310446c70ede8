// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include "bhyt/transformer_block.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bhyt/error.hpp"
#include "bhyt/rng.hpp"

namespace bhyt {

namespace {

void check_matrix(const Tensor& t, std::size_t rows, std::size_t cols, const char* name) {
  if (t.rank() != 2 || t.rows() != rows || t.cols() != cols) {
    throw DimensionError(std::string("block weights: ") + name + " must be [" +
                         std::to_string(rows) + " x " + std::to_string(cols) + "]");
  }
}

NormKind pre_norm_kind(Placement p) {
  switch (p) {
    case Placement::PreLN:
    case Placement::PeriLN:
    case Placement::RMSNormApprox: return NormKind::RMSNorm;
    case Placement::LNS: return NormKind::LNS;
    case Placement::DyT: return NormKind::DyT;
    case Placement::BHyT: return NormKind::BHyT;
    case Placement::BHyTStar: return NormKind::BHyTStar;
  }
  return NormKind::RMSNorm;
}

double uncentered_correlation(const Tensor& a, const Tensor& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return aa > 0.0 && bb > 0.0 ? ab / std::sqrt(aa * bb) : 0.0;
}

bool injects(Placement p) { return p == Placement::BHyT || p == Placement::RMSNormApprox; }

}  // namespace

std::string_view to_string(Placement p) {
  switch (p) {
    case Placement::PreLN: return "preln";
    case Placement::PeriLN: return "periln";
    case Placement::LNS: return "lns";
    case Placement::DyT: return "dyt";
    case Placement::BHyT: return "bhyt";
    case Placement::BHyTStar: return "bhyt_star";
    case Placement::RMSNormApprox: return "rmsnorm_approx";
  }
  return "?";
}

Placement placement_from_string(std::string_view name) {
  for (Placement p : kAllPlacements) {
    if (to_string(p) == name) {
      return p;
    }
  }
  throw ParameterError("unknown placement '" + std::string(name) + "'");
}

std::size_t reductions_per_block(Placement p) noexcept {
  switch (p) {
    case Placement::PeriLN: return 4;
    case Placement::DyT: return 0;
    case Placement::BHyT:
    case Placement::RMSNormApprox: return 1;
    default: return 2;
  }
}

NormKind final_norm_kind(Placement p) noexcept { return pre_norm_kind(p); }

std::string_view to_string(AttentionMode m) {
  return m == AttentionMode::Softmax ? "softmax" : "uniform";
}

AttentionMode attention_mode_from_string(std::string_view name) {
  if (name == "softmax") return AttentionMode::Softmax;
  if (name == "uniform") return AttentionMode::Uniform;
  throw ParameterError("unknown attention mode '" + std::string(name) + "'");
}

void BlockWeights::validate(Placement placement) const {
  const std::size_t dd = d(), dv = d_v(), dm = d_m();
  if (dd == 0 || dv == 0 || dm == 0) {
    throw DimensionError("block weights: zero-sized dimension");
  }
  check_matrix(w_q, dd, dv, "W_Q");
  check_matrix(w_k, dd, dv, "W_K");
  check_matrix(w_v, dd, dv, "W_V");
  check_matrix(w_o, dv, dd, "W_O");
  check_matrix(w_1, dd, dm, "W_1");
  check_matrix(w_2, dm, dd, "W_2");
  if (n_heads == 0 || dv % n_heads != 0) {
    throw DimensionError("block weights: d_V must be divisible by the head count");
  }
  const bool peri = placement == Placement::PeriLN;
  if (post_norm_attn.has_value() != peri || post_norm_mlp.has_value() != peri) {
    throw ParameterError("block weights: post-norms must be present iff placement is periln");
  }
  norm_attn.validate(dd);
  norm_mlp.validate(dd);
  if (peri) {
    post_norm_attn->validate(dd);
    post_norm_mlp->validate(dd);
  }
}

BlockWeights init_block(const BlockDims& dims, Placement placement, int layer_index,
                        const NormHyper& hyper, RngStream& rng, double init_std) {
  if (dims.d == 0 || dims.d_v == 0 || dims.d_m == 0) {
    throw DimensionError("init_block: dimensions must be positive");
  }
  const auto std_for = [&](std::size_t fan_in) {
    return init_std > 0.0 ? init_std : 1.0 / std::sqrt(static_cast<double>(fan_in));
  };
  BlockWeights w;
  w.n_heads = dims.n_heads;
  w.w_q = gaussian({dims.d, dims.d_v}, rng, std_for(dims.d));
  w.w_k = gaussian({dims.d, dims.d_v}, rng, std_for(dims.d));
  w.w_v = gaussian({dims.d, dims.d_v}, rng, std_for(dims.d));
  w.w_o = gaussian({dims.d_v, dims.d}, rng, std_for(dims.d_v));
  w.w_1 = gaussian({dims.d, dims.d_m}, rng, std_for(dims.d));
  w.w_2 = gaussian({dims.d_m, dims.d}, rng, std_for(dims.d_m));

  const NormKind kind = pre_norm_kind(placement);
  const auto site = [&](double lambda, double alpha) {
    NormConfig c = NormConfig::make(kind, dims.d);
    c.lambda = lambda;
    c.kappa = hyper.kappa;
    c.eps = hyper.eps;
    c.alpha_dyt = alpha;
    c.layer_index = layer_index;
    c.scale_grad = hyper.scale_grad;
    return c;
  };
  w.norm_attn = site(hyper.lambda_attn, hyper.alpha_dyt_attn);
  w.norm_mlp = site(hyper.lambda_mlp, hyper.alpha_dyt_mlp);
  if (placement == Placement::RMSNormApprox) {
    w.norm_mlp = NormConfig::make(NormKind::RMSNormApprox, dims.d);
    w.norm_mlp.eps = hyper.eps;
  } else if (placement == Placement::BHyT) {
    w.norm_mlp.variance_source = VarianceSource::Injected;
    w.norm_mlp.scale_grad = ScaleGrad::StopGradient;
  }
  if (placement == Placement::PeriLN) {
    w.post_norm_attn = site(1.0, 1.0);
    w.post_norm_mlp = site(1.0, 1.0);
  }
  w.validate(placement);
  return w;
}

BlockGrads BlockGrads::zeros_like(const BlockWeights& w) {
  BlockGrads g;
  g.w_q = Tensor(w.w_q.shape());
  g.w_k = Tensor(w.w_k.shape());
  g.w_v = Tensor(w.w_v.shape());
  g.w_o = Tensor(w.w_o.shape());
  g.w_1 = Tensor(w.w_1.shape());
  g.w_2 = Tensor(w.w_2.shape());
  g.gamma_attn = Tensor(w.norm_attn.gamma.shape());
  g.gamma_mlp = Tensor(w.norm_mlp.gamma.shape());
  if (w.post_norm_attn) g.gamma_post_attn = Tensor(w.post_norm_attn->gamma.shape());
  if (w.post_norm_mlp) g.gamma_post_mlp = Tensor(w.post_norm_mlp->gamma.shape());
  return g;
}

void BlockGrads::accumulate(const BlockGrads& o) {
  axpy(1.0, o.w_q, w_q);
  axpy(1.0, o.w_k, w_k);
  axpy(1.0, o.w_v, w_v);
  axpy(1.0, o.w_o, w_o);
  axpy(1.0, o.w_1, w_1);
  axpy(1.0, o.w_2, w_2);
  axpy(1.0, o.gamma_attn, gamma_attn);
  axpy(1.0, o.gamma_mlp, gamma_mlp);
  if (!gamma_post_attn.empty()) axpy(1.0, o.gamma_post_attn, gamma_post_attn);
  if (!gamma_post_mlp.empty()) axpy(1.0, o.gamma_post_mlp, gamma_post_mlp);
  alpha_attn += o.alpha_attn;
  alpha_mlp += o.alpha_mlp;
}

Tensor attention_forward(const Tensor& z, const BlockWeights& w, AttentionCache* cache) {
  if (z.rank() != 2 || z.cols() != w.d()) {
    throw DimensionError("attention_forward: input must be [T x d]");
  }
  const std::size_t t = z.rows(), dv = w.d_v(), heads = w.n_heads;
  const std::size_t dh = dv / heads;
  const Tensor v = matmul(z, w.w_v);
  Tensor q, k;
  const bool softmax = w.attention == AttentionMode::Softmax;
  if (softmax) {
    q = matmul(z, w.w_q);
    k = matmul(z, w.w_k);
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor concat({t, dv});
  std::vector<Tensor> probs;
  if (cache) probs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    Tensor p({t, t});
    for (std::size_t r = 0; r < t; ++r) {
      auto pr = p.row(r);
      if (softmax) {
        const auto qr = q.row(r);
        double mx = -HUGE_VAL;
        for (std::size_t s = 0; s <= r; ++s) {
          const auto ks = k.row(s);
          double dot = 0.0;
          for (std::size_t c = 0; c < dh; ++c) dot += qr[off + c] * ks[off + c];
          pr[s] = dot * inv_sqrt;
          mx = std::max(mx, pr[s]);
        }
        double sum = 0.0;
        for (std::size_t s = 0; s <= r; ++s) {
          pr[s] = std::exp(pr[s] - mx);
          sum += pr[s];
        }
        for (std::size_t s = 0; s <= r; ++s) pr[s] /= sum;
      } else {
        const double u = 1.0 / static_cast<double>(r + 1);
        for (std::size_t s = 0; s <= r; ++s) pr[s] = u;
      }
      auto out = concat.row(r);
      for (std::size_t s = 0; s <= r; ++s) {
        const double ps = pr[s];
        const auto vs = v.row(s);
        for (std::size_t c = 0; c < dh; ++c) out[off + c] += ps * vs[off + c];
      }
    }
    if (cache) probs.push_back(std::move(p));
  }
  Tensor out = matmul(concat, w.w_o);
  ensure_finite(out, "attention");
  if (cache) {
    cache->z = z;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = v;
    cache->probs = std::move(probs);
    cache->concat = std::move(concat);
  }
  return out;
}

Tensor mlp_forward(const Tensor& z, const BlockWeights& w, Activation activation, MlpCache* cache) {
  if (z.rank() != 2 || z.cols() != w.d()) {
    throw DimensionError("mlp_forward: input must be [T x d]");
  }
  Tensor u = matmul(z, w.w_1);
  Tensor a(u.shape());
  for (std::size_t i = 0; i < u.size(); ++i) a[i] = activate(activation, u[i]);
  Tensor out = matmul(a, w.w_2);
  ensure_finite(out, "mlp");
  if (cache) {
    cache->z = z;
    cache->u = std::move(u);
    cache->a = std::move(a);
  }
  return out;
}

Tensor mlp_forward(const Tensor& z, const BlockWeights& w, MlpCache* cache) {
  return mlp_forward(z, w, w.activation, cache);
}

VarianceEstimate block_attn_estimate(const BlockWeights& w, Placement placement, std::size_t t,
                                     std::int64_t step) {
  if (placement == Placement::BHyT) {
    return attn_output_variance(w.w_v, w.w_o, t, w.d(), w.norm_attn.lambda, w.norm_attn.kappa,
                                step);
  }
  if (placement == Placement::RMSNormApprox) {
    return attn_output_variance(w.w_v, w.w_o, t, w.d(), 1.0, 1.0, step);
  }
  throw ParameterError("block_attn_estimate: placement " + std::string(to_string(placement)) +
                       " does not inject a variance");
}

Tensor block_forward(const Tensor& x, const BlockWeights& w, Placement placement,
                     const EstimatorContext& ctx, BlockTrace& trace) {
  if (x.rank() != 2 || x.rows() == 0) {
    throw DimensionError("block_forward: input must be [T x d] with T >= 1");
  }
  if (x.cols() != w.d()) {
    throw DimensionError("block_forward: input width differs from the block width");
  }
  w.validate(placement);
  const std::size_t t = x.rows();
  trace = BlockTrace{};
  trace.placement = placement;
  trace.weights_version = w.version;
  trace.x = x;

  // Attention site. For injecting placements this is the block's only exact reduction.
  trace.z_attn = norm_forward(x, w.norm_attn, {}, &trace.norm_attn_cache);
  trace.s_x2 = Tensor({t});
  if (!trace.norm_attn_cache.moment.empty()) {
    std::copy(trace.norm_attn_cache.moment.begin(), trace.norm_attn_cache.moment.end(),
              trace.s_x2.data().begin());
  }
  trace.attn_raw = attention_forward(trace.z_attn, w, &trace.attn_cache);
  trace.h_attn = w.post_norm_attn
                     ? norm_forward(trace.attn_raw, *w.post_norm_attn, {}, &trace.post_attn_cache)
                     : trace.attn_raw;
  trace.x_prime = add(x, trace.h_attn);

  // MLP site.
  if (injects(placement) && !ctx.force_exact) {
    if (!ctx.frozen_injected.empty()) {
      trace.injected_rows.assign(ctx.frozen_injected.begin(), ctx.frozen_injected.end());
    } else {
      const VarianceEstimate est =
          ctx.attn_estimate ? *ctx.attn_estimate : block_attn_estimate(w, placement, t);
      trace.injected_var = est.value;
      trace.injected_rows.resize(t);
      for (std::size_t r = 0; r < t; ++r) {
        trace.injected_rows[r] = residual_variance_sum(trace.s_x2[r], est.value).value;
      }
    }
    trace.z_mlp = norm_forward(trace.x_prime, w.norm_mlp, trace.injected_rows,
                               &trace.norm_mlp_cache);
  } else if (injects(placement)) {
    NormConfig exact = w.norm_mlp;
    exact.kind = placement == Placement::BHyT ? NormKind::BHyT : NormKind::RMSNorm;
    exact.variance_source = VarianceSource::Exact;
    trace.z_mlp = norm_forward(trace.x_prime, exact, {}, &trace.norm_mlp_cache);
  } else {
    trace.z_mlp = norm_forward(trace.x_prime, w.norm_mlp, {}, &trace.norm_mlp_cache);
  }
  trace.mlp_raw = mlp_forward(trace.z_mlp, w, &trace.mlp_cache);
  trace.h_mlp = w.post_norm_mlp
                    ? norm_forward(trace.mlp_raw, *w.post_norm_mlp, {}, &trace.post_mlp_cache)
                    : trace.mlp_raw;
  trace.x_out = add(trace.x_prime, trace.h_mlp);
  ensure_finite(trace.x_out, "block output");

  if (ctx.collect_stats) {
    trace.mean_abs_attn = mean_abs(trace.h_attn);
    trace.variance_attn = mean_square(trace.h_attn);
    trace.mean_abs_mlp = mean_abs(trace.h_mlp);
    trace.variance_mlp = mean_square(trace.h_mlp);
    trace.mean_abs_out = mean_abs(trace.x_out);
    trace.variance_out = mean_square(trace.x_out);
    trace.exact_x_prime_mean = mean_square(trace.x_prime);
    double acc = 0.0;
    for (double v : trace.injected_rows) acc += v;
    trace.injected_mean =
        trace.injected_rows.empty() ? 0.0 : acc / static_cast<double>(trace.injected_rows.size());
    trace.rho_attn = uncentered_correlation(x, trace.h_attn);
    trace.rho_mlp = uncentered_correlation(trace.x_prime, trace.h_mlp);
  }
  trace.valid = true;
  return trace.x_out;
}

namespace {

struct AttnGrads {
  Tensor w_q, w_k, w_v, w_o, d_z;
};

AttnGrads attention_backward(const AttentionCache& c, const BlockWeights& w, const Tensor& grad) {
  const std::size_t t = c.z.rows(), dv = w.d_v(), heads = w.n_heads;
  const std::size_t dh = dv / heads;
  const bool softmax = w.attention == AttentionMode::Softmax;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  AttnGrads g;
  g.w_o = matmul_tn(c.concat, grad);
  const Tensor d_concat = matmul_nt(grad, w.w_o);
  Tensor d_v({t, dv}), d_q({t, dv}), d_k({t, dv});
  std::vector<double> dp(t);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    const Tensor& p = c.probs[h];
    for (std::size_t r = 0; r < t; ++r) {
      const auto pr = p.row(r);
      const auto dor = d_concat.row(r);
      // dV[s] += P[r,s]·dO[r];  dP[r,s] = dO[r]·V[s].
      double weighted = 0.0;
      for (std::size_t s = 0; s <= r; ++s) {
        const auto vs = c.v.row(s);
        auto dvs = d_v.row(s);
        double dot = 0.0;
        for (std::size_t col = 0; col < dh; ++col) {
          dvs[off + col] += pr[s] * dor[off + col];
          dot += dor[off + col] * vs[off + col];
        }
        dp[s] = dot;
        weighted += dot * pr[s];
      }
      if (!softmax) {
        continue;
      }
      const auto qr = c.q.row(r);
      auto dqr = d_q.row(r);
      for (std::size_t s = 0; s <= r; ++s) {
        const double ds = pr[s] * (dp[s] - weighted) * inv_sqrt;
        const auto ks = c.k.row(s);
        auto dks = d_k.row(s);
        for (std::size_t col = 0; col < dh; ++col) {
          dqr[off + col] += ds * ks[off + col];
          dks[off + col] += ds * qr[off + col];
        }
      }
    }
  }
  g.w_v = matmul_tn(c.z, d_v);
  g.d_z = matmul_nt(d_v, w.w_v);
  if (softmax) {
    g.w_q = matmul_tn(c.z, d_q);
    g.w_k = matmul_tn(c.z, d_k);
    axpy(1.0, matmul_nt(d_q, w.w_q), g.d_z);
    axpy(1.0, matmul_nt(d_k, w.w_k), g.d_z);
  } else {
    g.w_q = Tensor(w.w_q.shape());
    g.w_k = Tensor(w.w_k.shape());
  }
  return g;
}

}  // namespace

BlockGrads block_backward(const BlockTrace& trace, const BlockWeights& w, const Tensor& grad_out) {
  if (!trace.valid) {
    throw StateError("block_backward: no forward trace");
  }
  if (trace.weights_version != w.version) {
    throw StateError("block_backward: trace was taken at weight version " +
                     std::to_string(trace.weights_version) + ", weights are at " +
                     std::to_string(w.version));
  }
  if (!grad_out.same_shape(trace.x_out)) {
    throw DimensionError("block_backward: grad_out shape differs from block output");
  }
  BlockGrads g = BlockGrads::zeros_like(w);

  // x_out = x' + post(MLP(norm_mlp(x'))).
  Tensor d_mlp_raw = grad_out;
  if (w.post_norm_mlp) {
    NormGrads pg = norm_backward(*w.post_norm_mlp, trace.post_mlp_cache, grad_out);
    g.gamma_post_mlp = std::move(pg.d_gamma);
    d_mlp_raw = std::move(pg.d_input);
  }
  g.w_2 = matmul_tn(trace.mlp_cache.a, d_mlp_raw);
  Tensor d_u = matmul_nt(d_mlp_raw, w.w_2);
  for (std::size_t i = 0; i < d_u.size(); ++i) {
    d_u[i] *= activate_derivative(w.activation, trace.mlp_cache.u[i]);
  }
  g.w_1 = matmul_tn(trace.mlp_cache.z, d_u);
  const Tensor d_z_mlp = matmul_nt(d_u, w.w_1);

  NormConfig mlp_cfg = w.norm_mlp;
  if (trace.injected_rows.empty() && injects(trace.placement)) {
    mlp_cfg.kind = trace.placement == Placement::BHyT ? NormKind::BHyT : NormKind::RMSNorm;
    mlp_cfg.variance_source = VarianceSource::Exact;
  }
  NormGrads mg = norm_backward(mlp_cfg, trace.norm_mlp_cache, d_z_mlp);
  g.gamma_mlp = std::move(mg.d_gamma);
  g.alpha_mlp = mg.d_alpha_dyt;
  Tensor d_x_prime = add(grad_out, mg.d_input);

  // x' = x + post(Attn(norm_attn(x))).
  Tensor d_attn_raw = d_x_prime;
  if (w.post_norm_attn) {
    NormGrads pg = norm_backward(*w.post_norm_attn, trace.post_attn_cache, d_x_prime);
    g.gamma_post_attn = std::move(pg.d_gamma);
    d_attn_raw = std::move(pg.d_input);
  }
  AttnGrads ag = attention_backward(trace.attn_cache, w, d_attn_raw);
  g.w_q = std::move(ag.w_q);
  g.w_k = std::move(ag.w_k);
  g.w_v = std::move(ag.w_v);
  g.w_o = std::move(ag.w_o);
  NormGrads ng = norm_backward(w.norm_attn, trace.norm_attn_cache, ag.d_z);
  g.gamma_attn = std::move(ng.d_gamma);
  g.alpha_attn = ng.d_alpha_dyt;
  g.d_input = add(d_x_prime, ng.d_input);
  ensure_finite(g.d_input, "block_backward");
  return g;
}

}  // namespace bhyt
