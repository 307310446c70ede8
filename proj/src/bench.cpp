// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include "bhyt/bench.hpp"

#include <cblas.h>
#include <fmt/format.h>
#include <unistd.h>

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>

#include "bhyt/error.hpp"
#include "bhyt/rng.hpp"

namespace bhyt {
namespace {

using Clock = std::chrono::steady_clock;
using ArrayMap = Eigen::Map<Eigen::ArrayXf>;
using ConstArrayMap = Eigen::Map<const Eigen::ArrayXf>;

std::vector<float> to_float(const Tensor& t) {
  std::vector<float> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<float>(t[i]);
  return out;
}

// C[m x n] = A[m x k] · B[k x n], all row-major with explicit leading dimensions.
void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
          const float* b, std::size_t ldb, float* c, std::size_t ldc, bool b_transposed = false,
          float alpha = 1.0f) {
  cblas_sgemm(CblasRowMajor, CblasNoTrans, b_transposed ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), 0.0f, c, static_cast<int>(ldc));
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::vector<int> random_tokens(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  RngStream rng = RngStream(seed).split(7);
  std::vector<int> tokens(n);
  for (int& t : tokens) t = static_cast<int>(rng.below(vocab));
  return tokens;
}

BenchResult result_shell(Placement p, BenchMode mode, const BenchDims& dims,
                         const BenchOptions& opts) {
  BenchResult r;
  r.placement = p;
  r.mode = mode;
  r.dims = dims;
  r.iterations = opts.iterations;
  r.warmup = opts.warmup;
  r.threads = opts.threads;
  r.blas_core = blas_core_name();
  r.samples.reserve(opts.iterations);
  return r;
}

}  // namespace

void BenchDims::validate() const {
  if (seq_len == 0 || d == 0 || vocab == 0 || n_heads == 0 || d % n_heads != 0) {
    throw DimensionError("bench: T, d and vocab must be positive and d divisible by heads");
  }
}

void BenchOptions::validate() const {
  if (iterations < 30) throw ParameterError("bench: need at least 30 timed iterations");
  if (warmup < 5) throw ParameterError("bench: need at least 5 warmup iterations");
  if (threads < 1) throw ParameterError("bench: thread count must be positive");
}

std::string_view to_string(BenchMode m) {
  return m == BenchMode::Forward ? "forward" : "generate";
}

void summarize(BenchResult& r) {
  if (r.samples.empty()) throw StateError("bench: no samples to summarize");
  std::vector<double> sorted = r.samples;
  std::sort(sorted.begin(), sorted.end());
  r.median_seconds = quantile(sorted, 0.5);
  r.p10_seconds = quantile(sorted, 0.1);
  r.p90_seconds = quantile(sorted, 0.9);
  double acc = 0.0;
  for (double s : sorted) acc += s;
  r.mean_seconds = acc / static_cast<double>(sorted.size());
  if (r.mode == BenchMode::Generate && r.median_seconds > 0.0) {
    r.tokens_per_second = static_cast<double>(r.new_tokens) / r.median_seconds;
  }
  r.timer_resolution_seconds = timer_resolution();
  if (r.timer_resolution_seconds > 0.01 * r.median_seconds) {
    r.warning = fmt::format("timer resolution {:.3g} s exceeds 1% of the median {:.3g} s",
                            r.timer_resolution_seconds, r.median_seconds);
  }
}

std::string blas_core_name() { return openblas_get_corename(); }

void select_blas_core(char** argv) {
  if (std::getenv("OPENBLAS_CORETYPE") != nullptr) return;
  const char* core = nullptr;
  if (__builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512bw") &&
      __builtin_cpu_supports("avx512dq") && __builtin_cpu_supports("avx512vl")) {
    core = "SkylakeX";
  } else if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
    core = "Haswell";
  }
  if (core == nullptr) return;
  const std::string_view current = openblas_get_corename();
  if (current == "SkylakeX" || current == "Cooperlake" || current == "Sapphirerapids" ||
      (std::string_view(core) == "Haswell" && (current == "Haswell" || current == "Zen"))) {
    return;
  }
  if (setenv("OPENBLAS_CORETYPE", core, 1) != 0) return;
  execv("/proc/self/exe", argv);
}

double timer_resolution() {
  double best = HUGE_VAL;
  for (int i = 0; i < 200; ++i) {
    const Clock::time_point a = Clock::now();
    Clock::time_point b = Clock::now();
    while (b == a) b = Clock::now();
    best = std::min(best, std::chrono::duration<double>(b - a).count());
  }
  return best;
}

BenchModel::BenchModel(const Model& m)
    : placement_(m.cfg.placement),
      d_(m.cfg.d),
      d_v_(m.cfg.d_v),
      d_m_(m.cfg.d_m),
      heads_(m.cfg.n_heads),
      vocab_(m.cfg.vocab),
      seq_len_(m.cfg.seq_len),
      activation_(m.cfg.activation),
      attention_(m.cfg.attention) {
  auto w = std::make_shared<Weights>();
  w->tok_emb = to_float(m.tok_emb);
  w->pos_emb = to_float(m.pos_emb);
  w->head = to_float(m.head);
  for (const BlockWeights& bw : m.blocks) {
    w->blocks.push_back({to_float(bw.w_q), to_float(bw.w_k), to_float(bw.w_v), to_float(bw.w_o),
                         to_float(bw.w_1), to_float(bw.w_2)});
  }
  weights_ = std::move(w);

  auto ws = std::make_shared<Workspace>();
  const std::size_t t = seq_len_;
  ws->x.resize(t * d_);
  ws->z.resize(t * d_);
  ws->q.resize(t * d_v_);
  ws->k.resize(t * d_v_);
  ws->v.resize(t * d_v_);
  ws->scores.resize(t * t);
  ws->concat.resize(t * d_v_);
  ws->sub.resize(t * d_);
  ws->u.resize(t * d_m_);
  ws->moment.resize(t);
  ws->injected.resize(t);
  ws_ = std::move(ws);
  init_norms(m);
}

BenchModel::BenchModel(const Model& m, const BenchModel& share) : BenchModel(share) {
  const auto same = [](const Tensor& t, const std::vector<float>& f) {
    return t.size() == f.size() && to_float(t) == f;
  };
  bool ok = m.cfg.d == d_ && m.cfg.d_v == d_v_ && m.cfg.d_m == d_m_ && m.cfg.n_heads == heads_ &&
            m.cfg.vocab == vocab_ && m.cfg.seq_len == seq_len_ &&
            m.blocks.size() == weights_->blocks.size() && same(m.tok_emb, weights_->tok_emb) &&
            same(m.pos_emb, weights_->pos_emb) && same(m.head, weights_->head);
  for (std::size_t i = 0; ok && i < m.blocks.size(); ++i) {
    const BlockWeights& bw = m.blocks[i];
    const Matrices& f = weights_->blocks[i];
    ok = same(bw.w_q, f.w_q) && same(bw.w_k, f.w_k) && same(bw.w_v, f.w_v) &&
         same(bw.w_o, f.w_o) && same(bw.w_1, f.w_1) && same(bw.w_2, f.w_2);
  }
  if (!ok) throw ParameterError("bench model: shared weights differ from the model's");
  placement_ = m.cfg.placement;
  activation_ = m.cfg.activation;
  attention_ = m.cfg.attention;
  init_norms(m);
}

void BenchModel::init_norms(const Model& m) {
  const auto convert = [](const NormConfig& c) {
    Norm n;
    n.kind = c.kind;
    n.lambda = static_cast<float>(c.lambda);
    n.kappa = static_cast<float>(c.kappa);
    n.eps = static_cast<float>(c.eps);
    n.alpha = static_cast<float>(c.alpha_dyt);
    n.depth = c.kind == NormKind::LNS
                  ? static_cast<float>(1.0 / std::sqrt(static_cast<double>(c.layer_index)))
                  : 1.0f;
    n.gamma = to_float(c.gamma);
    return n;
  };
  const bool injects = placement_ == Placement::BHyT || placement_ == Placement::RMSNormApprox;
  blocks_.clear();
  for (const BlockWeights& w : m.blocks) {
    Block b;
    b.norm_attn = convert(w.norm_attn);
    b.norm_mlp = convert(w.norm_mlp);
    if (w.post_norm_attn) b.post_attn = convert(*w.post_norm_attn);
    if (w.post_norm_mlp) b.post_mlp = convert(*w.post_norm_mlp);
    // The closed form scales as 1/T; store its T = 1 value.
    if (injects) b.attn_estimate = static_cast<float>(block_attn_estimate(w, placement_, 1).value);
    blocks_.push_back(std::move(b));
  }
  final_norm_ = convert(m.final_norm);
}

void BenchModel::apply_norm(const Norm& n, const float* x, float* y, std::size_t rows,
                            const float* injected, float* moment_out) {
  const std::size_t d = d_;
  const ConstArrayMap g(n.gamma.data(), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < rows; ++r) {
    const ConstArrayMap xr(x + r * d, static_cast<Eigen::Index>(d));
    ArrayMap yr(y + r * d, static_cast<Eigen::Index>(d));
    switch (n.kind) {
      case NormKind::DyT:
        yr = g * (n.alpha * xr).tanh();
        break;
      case NormKind::BHyTStar: {
        const float mean = xr.mean();
        const float var = (xr - mean).square().mean();
        const float a = n.lambda / (n.kappa * std::sqrt(var + n.eps) + std::abs(mean));
        yr = g * (a * xr).tanh();
        break;
      }
      case NormKind::BHyT: {
        const float ms = injected ? injected[r] : xr.square().mean();
        if (moment_out) moment_out[r] = ms;
        const float a = n.lambda / n.kappa / std::sqrt(ms + n.eps);
        yr = g * (a * xr).tanh();
        break;
      }
      case NormKind::RMSNormApprox: {
        const float a = 1.0f / std::sqrt(injected[r] + n.eps);
        yr = g * (a * xr);
        break;
      }
      case NormKind::RMSNorm:
      case NormKind::LNS: {
        const float ms = xr.square().mean();
        if (moment_out) moment_out[r] = ms;
        const float a = n.depth / std::sqrt(ms + n.eps);
        yr = g * (a * xr);
        break;
      }
    }
  }
}

void BenchModel::block_forward(const Block& b, const Matrices& w, std::size_t t) {
  const std::size_t d = d_, dv = d_v_, dh = d_v_ / heads_;
  Workspace& ws = *ws_;
  apply_norm(b.norm_attn, ws.x.data(), ws.z.data(), t, nullptr, ws.moment.data());

  gemm(t, dv, d, ws.z.data(), d, w.w_v.data(), dv, ws.v.data(), dv);
  const bool softmax = attention_ == AttentionMode::Softmax;
  if (softmax) {
    gemm(t, dv, d, ws.z.data(), d, w.w_q.data(), dv, ws.q.data(), dv);
    gemm(t, dv, d, ws.z.data(), d, w.w_k.data(), dv, ws.k.data(), dv);
  }
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));
  for (std::size_t h = 0; h < heads_; ++h) {
    const std::size_t off = h * dh;
    if (softmax) {
      gemm(t, t, dh, ws.q.data() + off, dv, ws.k.data() + off, dv, ws.scores.data(), t, true, inv_sqrt);
    }
    for (std::size_t r = 0; r < t; ++r) {
      float* row = ws.scores.data() + r * t;
      ArrayMap live(row, static_cast<Eigen::Index>(r + 1));
      if (softmax) {
        live = (live - live.maxCoeff()).exp();
        live /= live.sum();
      } else {
        live.setConstant(1.0f / static_cast<float>(r + 1));
      }
      std::fill(row + r + 1, row + t, 0.0f);
    }
    gemm(t, dh, t, ws.scores.data(), t, ws.v.data() + off, dv, ws.concat.data() + off, dv);
  }
  gemm(t, d, dv, ws.concat.data(), dv, w.w_o.data(), d, ws.sub.data(), d);
  if (b.post_attn) apply_norm(*b.post_attn, ws.sub.data(), ws.sub.data(), t, nullptr, nullptr);
  ArrayMap x(ws.x.data(), static_cast<Eigen::Index>(t * d));
  x += ConstArrayMap(ws.sub.data(), static_cast<Eigen::Index>(t * d));

  if (b.norm_mlp.kind == NormKind::BHyT || b.norm_mlp.kind == NormKind::RMSNormApprox) {
    const float est = b.attn_estimate / static_cast<float>(t);
    for (std::size_t r = 0; r < t; ++r) ws.injected[r] = ws.moment[r] + est;
    apply_norm(b.norm_mlp, ws.x.data(), ws.z.data(), t, ws.injected.data(), nullptr);
  } else {
    apply_norm(b.norm_mlp, ws.x.data(), ws.z.data(), t, nullptr, nullptr);
  }
  gemm(t, d_m_, d, ws.z.data(), d, w.w_1.data(), d_m_, ws.u.data(), d_m_);
  ArrayMap u(ws.u.data(), static_cast<Eigen::Index>(t * d_m_));
  switch (activation_) {
    case Activation::Identity: break;
    case Activation::ReLU: u = u.max(0.0f); break;
    case Activation::Tanh: u = u.tanh(); break;
    case Activation::SiLU: u = u / (1.0f + (-u).exp()); break;
  }
  gemm(t, d, d_m_, ws.u.data(), d_m_, w.w_2.data(), d, ws.sub.data(), d);
  if (b.post_mlp) apply_norm(*b.post_mlp, ws.sub.data(), ws.sub.data(), t, nullptr, nullptr);
  x += ConstArrayMap(ws.sub.data(), static_cast<Eigen::Index>(t * d));
}

void BenchModel::run(std::span<const int> tokens, bool last_only, std::vector<float>& logits) {
  const std::size_t t = tokens.size();
  if (t == 0 || t > seq_len_) {
    throw DimensionError("bench forward: sequence length must be in [1, " +
                         std::to_string(seq_len_) + "]");
  }
  const Weights& w = *weights_;
  Workspace& ws = *ws_;
  for (std::size_t r = 0; r < t; ++r) {
    const int tok = tokens[r];
    if (tok < 0 || static_cast<std::size_t>(tok) >= vocab_) {
      throw ParameterError("bench forward: token id " + std::to_string(tok) + " out of range");
    }
    const ConstArrayMap e(w.tok_emb.data() + static_cast<std::size_t>(tok) * d_,
                          static_cast<Eigen::Index>(d_));
    const ConstArrayMap p(w.pos_emb.data() + r * d_, static_cast<Eigen::Index>(d_));
    ArrayMap(ws.x.data() + r * d_, static_cast<Eigen::Index>(d_)) = e + p;
  }
  for (std::size_t i = 0; i < blocks_.size(); ++i) block_forward(blocks_[i], w.blocks[i], t);

  const std::size_t first = last_only ? t - 1 : 0;
  const std::size_t rows = t - first;
  apply_norm(final_norm_, ws.x.data() + first * d_, ws.z.data(), rows, nullptr, nullptr);
  logits.resize(rows * vocab_);
  gemm(rows, vocab_, d_, ws.z.data(), d_, w.head.data(), vocab_, logits.data(), vocab_);
  if (!std::all_of(logits.begin(), logits.end(), [](float v) { return std::isfinite(v); })) {
    throw NumericError("bench logits");
  }
}

std::vector<float> BenchModel::forward(std::span<const int> tokens) {
  std::vector<float> logits;
  run(tokens, false, logits);
  return logits;
}

std::vector<float> BenchModel::forward_last(std::span<const int> tokens) {
  std::vector<float> logits;
  run(tokens, true, logits);
  return logits;
}

std::vector<int> BenchModel::generate(std::span<const int> prompt, std::size_t new_tokens) {
  if (prompt.empty()) throw DimensionError("generate: empty prompt");
  std::vector<int> seq(prompt.begin(), prompt.end());
  std::vector<int> out;
  out.reserve(new_tokens);
  std::vector<float> logits;
  for (std::size_t i = 0; i < new_tokens; ++i) {
    const std::size_t start = seq.size() > seq_len_ ? seq.size() - seq_len_ : 0;
    run(std::span<const int>(seq).subspan(start), true, logits);
    const int next = static_cast<int>(std::max_element(logits.begin(), logits.end()) -
                                      logits.begin());
    seq.push_back(next);
    out.push_back(next);
  }
  return out;
}

Model bench_model(Placement placement, const BenchDims& dims, std::uint64_t seed) {
  dims.validate();
  ModelConfig c;
  c.vocab = dims.vocab;
  c.n_layers = std::max<std::size_t>(dims.n_layers, 1);
  c.d = dims.d;
  c.d_v = dims.d;
  c.d_m = dims.mlp_width();
  c.seq_len = dims.seq_len;
  c.n_heads = dims.n_heads;
  c.placement = placement;
  c.zero_head = false;
  RngStream rng(seed);
  Model m = init_model(c, rng);
  m.blocks.resize(dims.n_layers);
  m.cfg.n_layers = dims.n_layers;
  return m;
}

std::vector<BenchResult> bench_forward_paired(std::span<const Placement> placements,
                                              const BenchDims& dims, const BenchOptions& opts) {
  opts.validate();
  openblas_set_num_threads(opts.threads);
  std::vector<BenchModel> models;
  std::vector<BenchResult> results;
  for (Placement p : placements) {
    if (models.empty()) {
      models.emplace_back(bench_model(p, dims, opts.seed));
    } else {
      models.emplace_back(bench_model(p, dims, opts.seed), models.front());
    }
    results.push_back(result_shell(p, BenchMode::Forward, dims, opts));
  }
  const std::vector<int> tokens = random_tokens(dims.seq_len, dims.vocab, opts.seed);
  const std::size_t n = models.size();
  std::vector<float> logits;
  for (std::size_t it = 0; it < opts.warmup + opts.iterations; ++it) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t idx = (j + it) % n;
      const Clock::time_point t0 = Clock::now();
      logits = models[idx].forward(tokens);
      const double s = seconds_since(t0);
      if (it >= opts.warmup) results[idx].samples.push_back(s);
    }
  }
  for (BenchResult& r : results) summarize(r);
  return results;
}

BenchResult bench_forward(Placement placement, const BenchDims& dims, const BenchOptions& opts) {
  const Placement one[] = {placement};
  return bench_forward_paired(one, dims, opts).front();
}

std::vector<BenchResult> bench_generate_paired(std::span<const Placement> placements,
                                               std::size_t prompt_len, std::size_t new_tokens,
                                               const BenchDims& dims, const BenchOptions& opts) {
  opts.validate();
  if (new_tokens < 16) throw ParameterError("bench_generate: need at least 16 new tokens");
  if (prompt_len == 0 || prompt_len > dims.seq_len) {
    throw DimensionError("bench_generate: prompt length must be in [1, T]");
  }
  openblas_set_num_threads(opts.threads);
  std::vector<BenchModel> models;
  std::vector<BenchResult> results;
  for (Placement p : placements) {
    if (models.empty()) {
      models.emplace_back(bench_model(p, dims, opts.seed));
    } else {
      models.emplace_back(bench_model(p, dims, opts.seed), models.front());
    }
    BenchResult r = result_shell(p, BenchMode::Generate, dims, opts);
    r.prompt_len = prompt_len;
    r.new_tokens = new_tokens;
    results.push_back(std::move(r));
  }
  const std::vector<int> prompt = random_tokens(prompt_len, dims.vocab, opts.seed);
  const std::size_t n = models.size();
  for (std::size_t it = 0; it < opts.warmup + opts.iterations; ++it) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t idx = (j + it) % n;
      const Clock::time_point t0 = Clock::now();
      std::vector<int> generated = models[idx].generate(prompt, new_tokens);
      const double s = seconds_since(t0);
      if (it >= opts.warmup) results[idx].samples.push_back(s);
      results[idx].generated = std::move(generated);
    }
  }
  for (BenchResult& r : results) summarize(r);
  return results;
}

BenchResult bench_generate(Placement placement, std::size_t prompt_len, std::size_t new_tokens,
                           const BenchDims& dims, const BenchOptions& opts) {
  const Placement one[] = {placement};
  return bench_generate_paired(one, prompt_len, new_tokens, dims, opts).front();
}

}  // namespace bhyt
