// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include "bhyt/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include <fmt/format.h>

#include "bhyt/error.hpp"

namespace bhyt {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool uses_injection(Placement p) {
  return p == Placement::BHyT || p == Placement::RMSNormApprox;
}

std::vector<int> head_tokens(const std::vector<int>& window, std::size_t n) {
  return {window.begin(), window.begin() + static_cast<std::ptrdiff_t>(n)};
}

}  // namespace

std::filesystem::path default_corpus_path() { return BHYT_DEFAULT_CORPUS; }

TokenCorpus make_toy_corpus(const std::filesystem::path& path, double eval_fraction) {
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
    throw ParameterError("make_toy_corpus: eval fraction must be in (0, 1)");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open corpus '" + path.string() + "'");
  }
  const std::vector<char> bytes{std::istreambuf_iterator<char>(in),
                                std::istreambuf_iterator<char>()};
  if (bytes.empty()) {
    throw IoError("corpus '" + path.string() + "' is empty");
  }
  const auto n_train = static_cast<std::size_t>(
      std::floor(static_cast<double>(bytes.size()) * (1.0 - eval_fraction)));
  TokenCorpus c;
  c.train.reserve(n_train);
  c.eval.reserve(bytes.size() - n_train);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const int tok = static_cast<int>(static_cast<unsigned char>(bytes[i]));
    (i < n_train ? c.train : c.eval).push_back(tok);
  }
  return c;
}

BatchSampler::BatchSampler(std::span<const int> tokens, std::size_t seq_len,
                           std::size_t batch_size, RngStream rng)
    : tokens_(tokens), seq_len_(seq_len), batch_size_(batch_size), rng_(rng) {
  if (seq_len == 0 || batch_size == 0) {
    throw ParameterError("BatchSampler: sequence length and batch size must be positive");
  }
  if (tokens.size() < seq_len + 1) {
    throw DimensionError("BatchSampler: token region shorter than one window");
  }
}

std::vector<std::size_t> BatchSampler::next_offsets() {
  const std::size_t starts = tokens_.size() - window() + 1;
  std::vector<std::size_t> out(batch_size_);
  for (std::size_t& o : out) o = static_cast<std::size_t>(rng_.below(starts));
  return out;
}

std::vector<std::vector<int>> BatchSampler::next_batch() {
  std::vector<std::vector<int>> batch;
  batch.reserve(batch_size_);
  for (std::size_t o : next_offsets()) {
    const auto first = tokens_.begin() + static_cast<std::ptrdiff_t>(o);
    batch.emplace_back(first, first + static_cast<std::ptrdiff_t>(window()));
  }
  return batch;
}

std::vector<std::vector<int>> fixed_windows(std::span<const int> tokens, std::size_t seq_len,
                                            std::size_t count) {
  const std::size_t window = seq_len + 1;
  if (count == 0 || seq_len == 0) {
    throw ParameterError("fixed_windows: count and sequence length must be positive");
  }
  if (count * window > tokens.size()) {
    throw DimensionError("fixed_windows: region too short for the requested windows");
  }
  const std::size_t stride = tokens.size() / count;
  std::vector<std::vector<int>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto first = tokens.begin() + static_cast<std::ptrdiff_t>(i * stride);
    out.emplace_back(first, first + static_cast<std::ptrdiff_t>(window));
  }
  return out;
}

std::string_view to_string(OptimizerKind k) {
  return k == OptimizerKind::SGD ? "sgd" : "adamw";
}

OptimizerKind optimizer_from_string(std::string_view name) {
  if (name == "sgd") return OptimizerKind::SGD;
  if (name == "adamw") return OptimizerKind::AdamW;
  throw ParameterError("unknown optimizer '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  model_config().validate();
  if (batch_size == 0) throw ParameterError("train: batch size must be positive");
  if (steps < 0) throw ParameterError("train: steps must be non-negative");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ParameterError("train: lr must be positive");
  if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) {
    throw ParameterError("train: warmup ratio must be in [0, 1]");
  }
  if (!(min_lr_ratio >= 0.0 && min_lr_ratio <= 1.0)) {
    throw ParameterError("train: min-LR ratio must be in [0, 1]");
  }
  if (!(weight_decay >= 0.0)) throw ParameterError("train: weight decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw ParameterError("train: AdamW betas must be in [0, 1) and eps positive");
  }
  if (stats_interval < 0 || eval_interval < 0) {
    throw ParameterError("train: logging intervals must be non-negative");
  }
  if (refresh_interval < 1 || divergence_check_interval < 1) {
    throw ParameterError("train: refresh and divergence-check intervals must be >= 1");
  }
  if (eval_windows == 0) throw ParameterError("train: eval windows must be positive");
  if (!(divergence_factor > 1.0)) throw ParameterError("train: divergence factor must exceed 1");
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.n_layers = n_layers;
  m.d = d;
  m.d_v = d_v;
  m.d_m = d_m;
  m.seq_len = seq_len;
  m.n_heads = n_heads;
  m.activation = activation;
  m.placement = placement;
  m.norm = norm;
  m.init_std = init_std;
  m.zero_head = true;
  return m;
}

double learning_rate_at(const TrainConfig& cfg, std::int64_t step) {
  const auto warm = static_cast<std::int64_t>(
      std::llround(cfg.warmup_ratio * static_cast<double>(cfg.steps)));
  if (step < warm) {
    return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(warm);
  }
  const std::int64_t decay = std::max<std::int64_t>(1, cfg.steps - warm);
  const double progress =
      std::min(1.0, static_cast<double>(step - warm) / static_cast<double>(decay));
  const double floor = cfg.min_lr_ratio * cfg.lr;
  return floor + (cfg.lr - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double TrainReport::initial_train_loss() const {
  return train_loss.empty() ? initial_eval_loss : train_loss.front();
}

double TrainReport::final_train_loss() const {
  return train_loss.empty() ? initial_eval_loss : train_loss.back();
}

std::vector<LayerStatsRecord> trace_records(const ModelTrace& trace, Placement placement,
                                            const std::string& run_id, std::int64_t step) {
  std::vector<LayerStatsRecord> out;
  out.reserve(3 * trace.blocks.size());
  for (std::size_t l = 0; l < trace.blocks.size(); ++l) {
    const BlockTrace& b = trace.blocks[l];
    LayerStatsRecord base;
    base.run_id = run_id;
    base.step = step;
    base.layer = l + 1;
    LayerStatsRecord res = base, attn = base, mlp = base;
    res.site = StatSite::ResidualStream;
    res.mean_abs = mean_abs(b.x);
    res.variance = mean_square(b.x);
    attn.site = StatSite::PostAttn;
    attn.mean_abs = mean_abs(b.x_prime);
    attn.variance = b.exact_x_prime_mean;
    attn.exact_variance = b.exact_x_prime_mean;
    if (uses_injection(placement)) attn.injected_variance = b.injected_mean;
    mlp.site = StatSite::PostMlp;
    mlp.mean_abs = b.mean_abs_out;
    mlp.variance = b.variance_out;
    out.push_back(std::move(res));
    out.push_back(std::move(attn));
    out.push_back(std::move(mlp));
  }
  return out;
}

TrainReport train(const TrainConfig& cfg) {
  const std::filesystem::path path =
      cfg.corpus_path.empty() ? default_corpus_path() : cfg.corpus_path;
  return train(cfg, make_toy_corpus(path));
}

Trainer::Trainer(const TrainConfig& cfg, const TokenCorpus& corpus)
    : cfg_((cfg.validate(), cfg)),
      wall0_(Clock::now()),
      root_(cfg.seed),
      model_([&] {
        RngStream init_rng = root_.split(1);
        return init_model(cfg_.model_config(), init_rng);
      }()),
      sampler_(corpus.train, cfg_.seq_len, cfg_.batch_size, root_.split(2)),
      eval_set_(fixed_windows(corpus.eval, cfg_.seq_len, cfg_.eval_windows)),
      injected_(uses_injection(cfg_.placement)) {
  rep_.run_id = cfg_.run_id;
  rep_.placement = cfg_.placement;
  rep_.seed = cfg_.seed;
  rep_.lr = cfg_.lr;
  rep_.init_scheme =
      cfg_.init_std > 0.0
          ? fmt::format("embeddings and projections N(0, {}^2); gamma = 1; head = 0", cfg_.init_std)
          : std::string("embeddings N(0, 1); projections N(0, 1/fan_in); gamma = 1; head = 0");

  if (injected_) {
    for (const BlockWeights& b : model_.blocks) {
      estimates_.push_back(block_attn_estimate(b, cfg_.placement, cfg_.seq_len, 0));
    }
  }

  reset_moment_reduction_count();
  model_forward(model_, head_tokens(eval_set_.front(), cfg_.seq_len), options());
  rep_.reductions_per_forward = moment_reduction_count();

  rep_.initial_eval_loss = batch_loss(model_, eval_set_, options());
  rep_.eval.push_back({0, rep_.initial_eval_loss});
  if (cfg_.stats_interval > 0) log_stats(0);

  ModelGrads shape = ModelGrads::zeros_like(model_);
  for (const ParamRef& p : parameter_refs(model_, shape)) {
    m1_.emplace_back(p.value.size(), 0.0);
    m2_.emplace_back(p.value.size(), 0.0);
  }
}

ForwardOptions Trainer::options() const {
  ForwardOptions opts;
  opts.attn_estimates = estimates_;
  return opts;
}

void Trainer::log_stats(std::int64_t step) {
  ForwardOptions so = options();
  so.collect_stats = true;
  ModelTrace trace;
  model_forward(model_, head_tokens(eval_set_.front(), cfg_.seq_len), so, &trace);
  auto rows = trace_records(trace, cfg_.placement, cfg_.run_id, step);
  rep_.layer_stats.insert(rep_.layer_stats.end(), std::make_move_iterator(rows.begin()),
                          std::make_move_iterator(rows.end()));
}

void Trainer::mark_diverged(std::int64_t step) {
  rep_.diverged = true;
  rep_.diverged_at_step = step;
}

bool Trainer::done() const { return rep_.diverged || step_ >= cfg_.steps; }

bool Trainer::step() {
  if (done()) return false;
  const std::int64_t step = step_;
  if (injected_) {
    const RefreshPolicy policy{cfg_.refresh_interval};
    for (std::size_t l = 0; l < model_.blocks.size(); ++l) {
      const std::int64_t before = estimates_[l].computed_at_step;
      estimates_[l] = maybe_refresh(estimates_[l], step, policy, [&](std::int64_t s) {
        return block_attn_estimate(model_.blocks[l], cfg_.placement, cfg_.seq_len, s);
      });
      if (estimates_[l].computed_at_step != before) ++rep_.estimator_refreshes;
    }
  }
  const auto batch = sampler_.next_batch();

  const auto t0 = Clock::now();
  LossAndGrads lg;
  try {
    lg = batch_loss_and_grads(model_, batch, options());
  } catch (const NumericError&) {
    mark_diverged(step);
    return false;
  }
  if (!std::isfinite(lg.loss)) {
    mark_diverged(step);
    return false;
  }
  rep_.train_loss.push_back(lg.loss);
  if (step == 0) reference_loss_ = lg.loss;

  const double lr = learning_rate_at(cfg_, step);
  const auto t = static_cast<double>(step + 1);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  const std::vector<ParamRef> refs = parameter_refs(model_, lg.grads);
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const ParamRef& p = refs[k];
    const double wd = p.decay ? cfg_.weight_decay : 0.0;
    std::vector<double>& m1 = m1_[k];
    std::vector<double>& m2 = m2_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      if (cfg_.optimizer == OptimizerKind::SGD) {
        p.value[i] -= lr * (g + wd * p.value[i]);
      } else {
        m1[i] = cfg_.beta1 * m1[i] + (1.0 - cfg_.beta1) * g;
        m2[i] = cfg_.beta2 * m2[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m1[i] / bc1;
        const double vhat = m2[i] / bc2;
        p.value[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.adam_eps) + wd * p.value[i]);
      }
    }
  }
  model_.bump_version();
  rep_.step_seconds.push_back(seconds_since(t0));
  step_ = step + 1;
  rep_.steps_completed = step_;

  if (step_ % cfg_.divergence_check_interval == 0 &&
      lg.loss > cfg_.divergence_factor * reference_loss_) {
    mark_diverged(step);
    return false;
  }
  try {
    if (cfg_.eval_interval > 0 && step_ % cfg_.eval_interval == 0 && step_ < cfg_.steps) {
      rep_.eval.push_back({step_, batch_loss(model_, eval_set_, options())});
    }
    if (cfg_.stats_interval > 0 && step_ % cfg_.stats_interval == 0) log_stats(step_);
  } catch (const NumericError&) {
    mark_diverged(step_);
    return false;
  }
  return !done();
}

TrainReport Trainer::finish() {
  while (step()) {
  }
  TrainReport rep = rep_;
  if (rep.diverged) {
    rep.final_eval_loss = std::numeric_limits<double>::quiet_NaN();
    rep.final_perplexity = std::numeric_limits<double>::quiet_NaN();
  } else {
    if (cfg_.steps == 0) {
      rep.final_eval_loss = rep.initial_eval_loss;
    } else {
      try {
        rep.final_eval_loss = batch_loss(model_, eval_set_, options());
      } catch (const NumericError&) {
        rep.final_eval_loss = std::numeric_limits<double>::quiet_NaN();
      }
      rep.eval.push_back({cfg_.steps, rep.final_eval_loss});
    }
    rep.final_perplexity = std::exp(rep.final_eval_loss);
  }
  if (!rep.step_seconds.empty()) {
    double total = 0.0;
    for (double t : rep.step_seconds) total += t;
    rep.mean_step_seconds = total / static_cast<double>(rep.step_seconds.size());
    std::vector<double> sorted = rep.step_seconds;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    rep.median_step_seconds = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  }
  rep.wall_seconds = seconds_since(wall0_);
  return rep;
}

TrainReport train(const TrainConfig& cfg, const TokenCorpus& corpus) {
  Trainer trainer(cfg, corpus);
  return trainer.finish();
}

GradCheckResult grad_check_model(const ModelConfig& cfg, double eps, std::uint64_t seed) {
  cfg.validate();
  if (!(eps > 0.0)) throw ParameterError("grad_check_model: eps must be positive");
  if (cfg.norm.scale_grad != ScaleGrad::Differentiate) {
    throw ParameterError("grad_check_model: finite differences need differentiated scales");
  }
  const RngStream root(seed);
  RngStream init_rng = root.split(1);
  Model m = init_model(cfg, init_rng);
  RngStream data_rng = root.split(2);
  std::vector<int> seq(cfg.seq_len + 1);
  for (int& t : seq) t = static_cast<int>(data_rng.below(cfg.vocab));

  ModelTrace trace;
  Tensor d_logits;
  sequence_loss(m, seq, {}, &trace, &d_logits);
  ModelGrads analytic = model_backward(m, trace, d_logits);

  std::vector<std::vector<double>> frozen;
  for (const BlockTrace& b : trace.blocks) frozen.push_back(b.injected_rows);
  ForwardOptions opts;
  opts.frozen_injected = frozen;

  GradCheckResult res;
  for (const ParamRef& p : parameter_refs(m, analytic)) {
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      const auto loss_at = [&](double offset) {
        p.value[i] = saved + offset;
        return sequence_loss(m, seq, opts);
      };
      const double numeric = (loss_at(-2.0 * eps) - 8.0 * loss_at(-eps) + 8.0 * loss_at(eps) -
                              loss_at(2.0 * eps)) /
                             (12.0 * eps);
      p.value[i] = saved;
      const double a = p.grad[i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
    res.params_checked += p.value.size();
    const double denom = std::max(std::sqrt(std::max(a2, n2)), 1e-12);
    const double rel = std::sqrt(diff2) / denom;
    if (res.worst_param.empty() || rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_param = p.name;
    }
  }
  return res;
}

}  // namespace bhyt
