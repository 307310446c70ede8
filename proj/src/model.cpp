// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include "bhyt/model.hpp"

#include <cmath>
#include <string>

#include "bhyt/error.hpp"
#include "bhyt/rng.hpp"

namespace bhyt {

void ModelConfig::validate() const {
  if (vocab == 0 || n_layers == 0 || d == 0 || d_v == 0 || d_m == 0 || seq_len == 0) {
    throw ParameterError("model: vocab, L, d, d_V, d_m and T must be positive");
  }
  if (n_heads == 0 || d_v % n_heads != 0) {
    throw ParameterError("model: d_V must be divisible by n_heads");
  }
  if (!(norm.kappa > 1.0) || !(norm.lambda_attn > 0.0) || !(norm.lambda_mlp > 0.0)) {
    throw ParameterError("model: need kappa > 1 and positive lambdas");
  }
}

void Model::bump_version() {
  for (BlockWeights& b : blocks) ++b.version;
}

Model init_model(const ModelConfig& cfg, RngStream& rng) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  RngStream emb_rng = rng.split(1);
  RngStream block_rng = rng.split(2);
  RngStream head_rng = rng.split(3);
  const double emb_std = cfg.init_std > 0.0 ? cfg.init_std : 1.0;
  m.tok_emb = gaussian({cfg.vocab, cfg.d}, emb_rng, emb_std);
  m.pos_emb = gaussian({cfg.seq_len, cfg.d}, emb_rng, emb_std);
  m.blocks.reserve(cfg.n_layers);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    RngStream layer_rng = block_rng.split(l);
    BlockWeights b = init_block(cfg.block_dims(), cfg.placement, static_cast<int>(l + 1), cfg.norm,
                                layer_rng, cfg.init_std);
    b.activation = cfg.activation;
    b.attention = cfg.attention;
    m.blocks.push_back(std::move(b));
  }

  NormConfig fin = NormConfig::make(final_norm_kind(cfg.placement), cfg.d);
  fin.lambda = cfg.norm.lambda_mlp;
  fin.kappa = cfg.norm.kappa;
  fin.eps = cfg.norm.eps;
  fin.alpha_dyt = cfg.norm.alpha_dyt_final;
  fin.layer_index = static_cast<int>(cfg.n_layers);
  fin.scale_grad = cfg.norm.scale_grad;
  fin.validate(cfg.d);
  m.final_norm = fin;

  m.head = cfg.zero_head
               ? Tensor({cfg.d, cfg.vocab})
               : gaussian({cfg.d, cfg.vocab}, head_rng,
                          cfg.init_std > 0.0 ? cfg.init_std
                                             : 1.0 / std::sqrt(static_cast<double>(cfg.d)));
  return m;
}

Tensor model_forward(const Model& m, std::span<const int> tokens, const ForwardOptions& opts,
                     ModelTrace* trace) {
  const std::size_t n = tokens.size();
  const std::size_t d = m.cfg.d;
  if (n == 0 || n > m.cfg.seq_len) {
    throw DimensionError("model_forward: sequence length must be in [1, " +
                         std::to_string(m.cfg.seq_len) + "]");
  }
  if (!opts.attn_estimates.empty() && opts.attn_estimates.size() != m.blocks.size()) {
    throw DimensionError("model_forward: need one cached estimate per block");
  }
  if (!opts.frozen_injected.empty() && opts.frozen_injected.size() != m.blocks.size()) {
    throw DimensionError("model_forward: need one frozen injected vector per block");
  }

  Tensor x({n, d});
  for (std::size_t t = 0; t < n; ++t) {
    const int tok = tokens[t];
    if (tok < 0 || static_cast<std::size_t>(tok) >= m.cfg.vocab) {
      throw ParameterError("model_forward: token id " + std::to_string(tok) + " out of range");
    }
    const auto e = m.tok_emb.row(static_cast<std::size_t>(tok));
    const auto p = m.pos_emb.row(t);
    auto xr = x.row(t);
    for (std::size_t i = 0; i < d; ++i) xr[i] = e[i] + p[i];
  }

  ModelTrace local;
  ModelTrace& tr = trace ? *trace : local;
  tr.tokens.assign(tokens.begin(), tokens.end());
  tr.x0 = x;
  tr.blocks.resize(m.blocks.size());
  for (std::size_t l = 0; l < m.blocks.size(); ++l) {
    EstimatorContext ctx;
    if (!opts.attn_estimates.empty()) ctx.attn_estimate = opts.attn_estimates[l];
    if (!opts.frozen_injected.empty()) ctx.frozen_injected = opts.frozen_injected[l];
    ctx.force_exact = opts.force_exact;
    ctx.collect_stats = opts.collect_stats;
    try {
      x = block_forward(x, m.blocks[l], m.cfg.placement, ctx, tr.blocks[l]);
    } catch (const NumericError& e) {
      throw NumericError(e.site(), l + 1);
    }
  }
  tr.x_final = x;
  tr.z_final = norm_forward(x, m.final_norm, {}, &tr.final_cache);
  tr.logits = matmul(tr.z_final, m.head);
  return tr.logits;
}

ModelGrads ModelGrads::zeros_like(const Model& m) {
  ModelGrads g;
  g.tok_emb = Tensor(m.tok_emb.shape());
  g.pos_emb = Tensor(m.pos_emb.shape());
  g.head = Tensor(m.head.shape());
  g.final_gamma = Tensor(m.final_norm.gamma.shape());
  g.blocks.reserve(m.blocks.size());
  for (const BlockWeights& b : m.blocks) g.blocks.push_back(BlockGrads::zeros_like(b));
  return g;
}

void ModelGrads::accumulate(const ModelGrads& o) {
  axpy(1.0, o.tok_emb, tok_emb);
  axpy(1.0, o.pos_emb, pos_emb);
  axpy(1.0, o.head, head);
  axpy(1.0, o.final_gamma, final_gamma);
  final_alpha += o.final_alpha;
  for (std::size_t l = 0; l < blocks.size(); ++l) blocks[l].accumulate(o.blocks[l]);
}

void ModelGrads::scale_by(double s) {
  const auto sc = [s](Tensor& t) {
    for (double& v : t.data()) v *= s;
  };
  sc(tok_emb);
  sc(pos_emb);
  sc(head);
  sc(final_gamma);
  final_alpha *= s;
  for (BlockGrads& b : blocks) {
    for (Tensor* t : {&b.w_q, &b.w_k, &b.w_v, &b.w_o, &b.w_1, &b.w_2, &b.gamma_attn, &b.gamma_mlp,
                      &b.gamma_post_attn, &b.gamma_post_mlp}) {
      sc(*t);
    }
    b.alpha_attn *= s;
    b.alpha_mlp *= s;
  }
}

ModelGrads model_backward(const Model& m, const ModelTrace& trace, const Tensor& d_logits) {
  if (trace.blocks.size() != m.blocks.size() || !d_logits.same_shape(trace.logits)) {
    throw StateError("model_backward: trace does not match the model");
  }
  ModelGrads g;
  g.tok_emb = Tensor(m.tok_emb.shape());
  g.pos_emb = Tensor(m.pos_emb.shape());
  g.head = matmul_tn(trace.z_final, d_logits);
  const Tensor d_z = matmul_nt(d_logits, m.head);
  NormGrads fg = norm_backward(m.final_norm, trace.final_cache, d_z);
  g.final_gamma = std::move(fg.d_gamma);
  g.final_alpha = fg.d_alpha_dyt;

  Tensor dx = std::move(fg.d_input);
  g.blocks.resize(m.blocks.size());
  for (std::size_t l = m.blocks.size(); l-- > 0;) {
    g.blocks[l] = block_backward(trace.blocks[l], m.blocks[l], dx);
    dx = std::move(g.blocks[l].d_input);
    g.blocks[l].d_input = Tensor();
  }
  const std::size_t d = m.cfg.d;
  for (std::size_t t = 0; t < trace.tokens.size(); ++t) {
    const auto src = dx.row(t);
    auto te = g.tok_emb.row(static_cast<std::size_t>(trace.tokens[t]));
    auto pe = g.pos_emb.row(t);
    for (std::size_t i = 0; i < d; ++i) {
      te[i] += src[i];
      pe[i] += src[i];
    }
  }
  return g;
}

double sequence_loss(const Model& m, std::span<const int> seq, const ForwardOptions& opts,
                     ModelTrace* trace, Tensor* d_logits) {
  if (seq.size() < 2) {
    throw DimensionError("sequence_loss: need at least two tokens");
  }
  const std::size_t n = seq.size() - 1;
  const Tensor logits = model_forward(m, seq.first(n), opts, trace);
  const std::size_t v = m.cfg.vocab;
  if (d_logits) *d_logits = Tensor({n, v});
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t t = 0; t < n; ++t) {
    const auto lr = logits.row(t);
    double mx = lr[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, lr[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < v; ++j) sum += std::exp(lr[j] - mx);
    const double log_z = mx + std::log(sum);
    const auto target = static_cast<std::size_t>(seq[t + 1]);
    if (target >= v) {
      throw ParameterError("sequence_loss: target id out of range");
    }
    loss += log_z - lr[target];
    if (d_logits) {
      auto dr = d_logits->row(t);
      for (std::size_t j = 0; j < v; ++j) dr[j] = std::exp(lr[j] - log_z) * inv_n;
      dr[target] -= inv_n;
    }
  }
  return loss * inv_n;
}

LossAndGrads batch_loss_and_grads(const Model& m, const std::vector<std::vector<int>>& batch,
                                  const ForwardOptions& opts) {
  if (batch.empty()) {
    throw DimensionError("batch_loss_and_grads: empty batch");
  }
  LossAndGrads out{0.0, ModelGrads::zeros_like(m)};
  ModelTrace trace;
  Tensor d_logits;
  for (const std::vector<int>& seq : batch) {
    out.loss += sequence_loss(m, seq, opts, &trace, &d_logits);
    out.grads.accumulate(model_backward(m, trace, d_logits));
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv_b;
  out.grads.scale_by(inv_b);
  return out;
}

double batch_loss(const Model& m, const std::vector<std::vector<int>>& batch,
                  const ForwardOptions& opts) {
  double loss = 0.0;
  for (const std::vector<int>& seq : batch) loss += sequence_loss(m, seq, opts);
  return loss / static_cast<double>(batch.size());
}

std::vector<ParamRef> parameter_refs(Model& m, ModelGrads& g) {
  std::vector<ParamRef> refs;
  const auto push = [&](std::string name, Tensor& v, Tensor& gr, bool decay) {
    refs.push_back({std::move(name), v.data(), gr.data(), decay});
  };
  push("tok_emb", m.tok_emb, g.tok_emb, false);
  push("pos_emb", m.pos_emb, g.pos_emb, false);
  const bool dyt = m.cfg.placement == Placement::DyT;
  for (std::size_t l = 0; l < m.blocks.size(); ++l) {
    BlockWeights& b = m.blocks[l];
    BlockGrads& bg = g.blocks[l];
    const std::string p = "block" + std::to_string(l + 1) + ".";
    push(p + "w_q", b.w_q, bg.w_q, true);
    push(p + "w_k", b.w_k, bg.w_k, true);
    push(p + "w_v", b.w_v, bg.w_v, true);
    push(p + "w_o", b.w_o, bg.w_o, true);
    push(p + "w_1", b.w_1, bg.w_1, true);
    push(p + "w_2", b.w_2, bg.w_2, true);
    push(p + "gamma_attn", b.norm_attn.gamma, bg.gamma_attn, false);
    push(p + "gamma_mlp", b.norm_mlp.gamma, bg.gamma_mlp, false);
    if (b.post_norm_attn) push(p + "gamma_post_attn", b.post_norm_attn->gamma, bg.gamma_post_attn, false);
    if (b.post_norm_mlp) push(p + "gamma_post_mlp", b.post_norm_mlp->gamma, bg.gamma_post_mlp, false);
    if (dyt) {
      refs.push_back({p + "alpha_attn", {&b.norm_attn.alpha_dyt, 1}, {&bg.alpha_attn, 1}, false});
      refs.push_back({p + "alpha_mlp", {&b.norm_mlp.alpha_dyt, 1}, {&bg.alpha_mlp, 1}, false});
    }
  }
  push("final_gamma", m.final_norm.gamma, g.final_gamma, false);
  if (dyt) refs.push_back({"final_alpha", {&m.final_norm.alpha_dyt, 1}, {&g.final_alpha, 1}, false});
  push("head", m.head, g.head, true);
  return refs;
}

}  // namespace bhyt
