// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: runs each criterion and prints one PASS/FAIL line.
// Usage: bhyt_acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "bhyt/bench.hpp"
#include "bhyt/bounds.hpp"
#include "bhyt/depth_analysis.hpp"
#include "bhyt/model.hpp"
#include "bhyt/numerics.hpp"
#include "bhyt/rng.hpp"
#include "bhyt/training.hpp"
#include "bhyt/var_accuracy.hpp"

using namespace bhyt;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

// Criterion 1: Chebyshev scaling keeps |αx| ≤ λ with probability ≥ p.
Outcome chebyshev_coverage_check() {
  const double means[] = {0.0, 0.5, -2.0};
  const double stds[] = {1.0, 1.3, 0.2};
  const double p = 0.99;
  double worst = 1.0;
  std::string worst_case;
  const RngStream root(101);
  std::uint64_t tag = 0;
  for (double lambda : {1.0, 2.0}) {
    for (Distribution d : kAllDistributions) {
      for (int k = 0; k < 3; ++k) {
        RngStream rng = root.split(tag++);
        const double cov = chebyshev_coverage(d, means[k], stds[k], lambda, p, 100000, rng);
        if (cov < worst) {
          worst = cov;
          worst_case = fmt::format("{} mu={} s={} lambda={}", to_string(d), means[k], stds[k],
                                   lambda);
        }
      }
    }
  }
  return {worst >= p, fmt::format("min coverage {:.5f} ({}) vs p = {}", worst, worst_case, p)};
}

// Criterion 2: Var(tanh(αx)) inside [(tanh λ/λ)²λ²/κ², λ²/κ²] ± 3 SE.
Outcome tanh_bracket_check() {
  bool ok = true;
  std::string detail;
  const RngStream root(202);
  for (double lambda : {1.0, 2.0}) {
    RngStream rng = root.split(static_cast<std::uint64_t>(lambda));
    const TanhVarianceCheck t = tanh_variance_mc(lambda, 10.0, 1000000, rng);
    ok = ok && t.within(3.0);
    detail += fmt::format("{}lambda={}: {:.6f} in [{:.6f}, {:.6f}] (se {:.2g})",
                          detail.empty() ? "" : "; ", lambda, t.variance, t.lower, t.upper,
                          t.std_error);
  }
  return {ok, detail};
}

// Criterion 3: injected vs exact second-norm variance on a Gaussian-init stack.
Outcome variance_accuracy_check() {
  VarAccuracyConfig c;
  c.n_layers = 8;
  c.d = c.d_v = 128;
  c.d_m = 512;
  c.seq_len = 256;
  c.n_inputs = 100;
  const VarAccuracyResult r = variance_accuracy(c);
  const AgreementMetrics& m = r.metrics;
  return {m.pearson >= 0.9 && m.r_squared >= 0.8,
          fmt::format("{} points: pearson {:.5f} (>= 0.9), R2 {:.5f} (>= 0.8), spearman {:.4f}",
                      r.points.size(), m.pearson, m.r_squared, m.spearman)};
}

// Criterion 4: exact BHyT-Upper vs LNS comparison at λ = 1, κ = 10.
Outcome depth_bound_check() {
  GainParams g;
  g.c_attn = g.c_mlp = 1.0;
  g.lambda_attn = g.lambda_mlp = 1.0;
  g.kappa = 10.0;
  std::size_t failures = 0;
  for (std::size_t L = 1; L <= 99; ++L) {
    const bool cond = finite_depth_bound_check(1.0, 10.0, L);
    const ExactDepthComparison c = compare_bhyt_lns_exact(L, g, 1.0);
    failures += !(cond && c.strictly_below && c.multipliers_below);
  }
  const bool at100 = finite_depth_bound_check(1.0, 10.0, 100);
  const ExactDepthComparison c100 = compare_bhyt_lns_exact(100, g, 1.0);
  return {failures == 0 && !at100 && !c100.multipliers_below,
          fmt::format("L = 1..99: {} failures; L = 100 condition {}, multipliers below {}",
                      failures, at100, c100.multipliers_below)};
}

// Criterion 5: median final-layer variance ordering over seeds.
Outcome depth_scan_check() {
  ScanDims dims;
  dims.d = 128;
  dims.d_m = 512;
  dims.seq_len = 128;
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < 10; ++s) seeds.push_back(s);
  std::map<Placement, double> med;
  for (Placement p : {Placement::PreLN, Placement::PeriLN, Placement::LNS, Placement::DyT,
                      Placement::BHyT}) {
    std::vector<double> finals;
    for (const ScanRun& r : monte_carlo_depth_scan(16, p, dims, seeds)) {
      finals.push_back(r.diverged_at ? INFINITY : r.layers.back().s2_out);
    }
    med[p] = median(finals);
  }
  const double b = med[Placement::BHyT];
  const bool ok = b < med[Placement::LNS] && b < med[Placement::PeriLN] &&
                  med[Placement::PreLN] >= 2.0 * b && med[Placement::DyT] >= 2.0 * b;
  return {ok, fmt::format("medians: bhyt {:.4g}, lns {:.4g}, periln {:.4g}, preln {:.4g}, "
                          "dyt {:.4g}",
                          b, med[Placement::LNS], med[Placement::PeriLN], med[Placement::PreLN],
                          med[Placement::DyT])};
}

// Criterion 6: full-model finite-difference gradient check.
Outcome gradient_check() {
  double worst = 0.0;
  std::string where;
  for (Placement p : kAllPlacements) {
    ModelConfig c;
    c.placement = p;
    c.n_layers = 2;
    c.d = c.d_v = 8;
    c.d_m = 16;
    c.seq_len = 8;
    c.init_std = -1.0;
    c.zero_head = false;
    const GradCheckResult r = grad_check_model(c, 1e-3, 6);
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      where = fmt::format("{} {}", to_string(p), r.worst_param);
    }
  }
  return {worst < 1e-5, fmt::format("max relative error {:.3g} at {} (< 1e-5)", worst, where)};
}

// Criterion 7: measured moment reductions per block in a forward pass.
Outcome reduction_check() {
  const std::map<Placement, std::uint64_t> expected = {{Placement::BHyT, 1},
                                                       {Placement::PreLN, 2},
                                                       {Placement::LNS, 2},
                                                       {Placement::PeriLN, 4},
                                                       {Placement::DyT, 0}};
  bool ok = true;
  std::string detail;
  const std::vector<int> tokens = {3, 1, 4, 1, 5, 9, 2, 6};
  for (const auto& [p, want] : expected) {
    std::uint64_t counts[2];
    const std::size_t depths[2] = {1, 3};
    for (int k = 0; k < 2; ++k) {
      ModelConfig c;
      c.placement = p;
      c.n_layers = depths[k];
      c.d = c.d_v = 8;
      c.d_m = 16;
      c.seq_len = 8;
      RngStream rng(7);
      const Model m = init_model(c, rng);
      reset_moment_reduction_count();
      model_forward(m, tokens, {});
      counts[k] = moment_reduction_count();
    }
    const std::uint64_t per_block = (counts[1] - counts[0]) / 2;
    ok = ok && per_block == want && counts[1] - counts[0] == 2 * want;
    detail += fmt::format("{}{} {}", detail.empty() ? "" : ", ", to_string(p), per_block);
  }
  return {ok, "reductions per block: " + detail};
}

// Criterion 8: paired single-thread forward benchmark orderings.
Outcome speed_check() {
  const Placement order[] = {Placement::DyT, Placement::BHyT, Placement::PreLN,
                             Placement::PeriLN};
  BenchDims dims;  // T = 1024, d = 512, L = 16
  BenchOptions opts;
  opts.iterations = 30;
  opts.warmup = 5;
  opts.threads = 1;
  const int reps = 5;
  std::map<Placement, std::vector<double>> rep_medians;
  for (int r = 0; r < reps; ++r) {
    for (const BenchResult& b : bench_forward_paired(order, dims, opts)) {
      rep_medians[b.placement].push_back(b.median_seconds);
    }
  }
  std::map<Placement, double> med;
  for (auto& [p, v] : rep_medians) med[p] = median(v);
  const double dyt = med[Placement::DyT], bh = med[Placement::BHyT],
               pre = med[Placement::PreLN], peri = med[Placement::PeriLN];
  const bool ok = dyt <= bh && bh < peri && bh <= 1.02 * pre;
  return {ok, fmt::format("median of {} repetition medians [ms]: dyt {:.2f}, bhyt {:.2f}, "
                          "preln {:.2f}, periln {:.2f} (BLAS core {})",
                          reps, 1e3 * dyt, 1e3 * bh, 1e3 * pre, 1e3 * peri, blas_core_name())};
}

TrainConfig toy_train_config(Placement p, double lr, std::uint64_t seed) {
  TrainConfig t;
  t.placement = p;
  t.lr = lr;
  t.seed = seed;
  t.steps = 2000;
  t.run_id = fmt::format("{}-lr{}-seed{}", to_string(p), lr, seed);
  return t;
}

// Criterion 9: learning-rate robustness on the toy language model.
Outcome stability_check() {
  const TokenCorpus corpus = make_toy_corpus(default_corpus_path());
  std::map<Placement, int> diverged;
  int bhyt_not_improved = 0;
  std::string losses;
  for (double lr : {1e-4, 3e-4, 1e-3, 3e-3}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      for (Placement p : {Placement::BHyT, Placement::DyT}) {
        const TrainReport r = train(toy_train_config(p, lr, seed), corpus);
        diverged[p] += r.diverged;
        if (p == Placement::BHyT && !r.diverged &&
            !(r.final_train_loss() < r.initial_train_loss())) {
          ++bhyt_not_improved;
        }
        if (p == Placement::BHyT && seed == 0) {
          losses += fmt::format(" lr {}: {:.3f}->{:.3f};", lr, r.initial_train_loss(),
                                r.final_train_loss());
        }
      }
    }
  }
  const bool ok = diverged[Placement::BHyT] <= diverged[Placement::DyT] && bhyt_not_improved == 0;
  return {ok, fmt::format("diverged runs: bhyt {}/12, dyt {}/12; bhyt runs without loss decrease "
                          "{}; bhyt seed 0 train loss{}",
                          diverged[Placement::BHyT], diverged[Placement::DyT], bhyt_not_improved,
                          losses)};
}

// Criterion 10: injected vs exact variance ablation, trained in lockstep.
Outcome ablation_check() {
  const TokenCorpus corpus = make_toy_corpus(default_corpus_path());
  Trainer a(toy_train_config(Placement::BHyT, 1e-3, 0), corpus);
  Trainer b(toy_train_config(Placement::BHyTStar, 1e-3, 0), corpus);
  while (a.step() | b.step()) {
  }
  const TrainReport ra = a.finish();
  const TrainReport rb = b.finish();
  const double gap = std::abs(ra.final_eval_loss - rb.final_eval_loss) / rb.final_eval_loss;
  const bool ok = !ra.diverged && !rb.diverged && gap <= 0.03 &&
                  ra.median_step_seconds <= rb.median_step_seconds;
  return {ok, fmt::format("final eval loss bhyt {:.4f} vs bhyt_star {:.4f} (gap {:.2f}%, <= 3%); "
                          "median step {:.3f} ms vs {:.3f} ms",
                          ra.final_eval_loss, rb.final_eval_loss, 100.0 * gap,
                          1e3 * ra.median_step_seconds, 1e3 * rb.median_step_seconds)};
}

}  // namespace

int main(int argc, char** argv) {
  select_blas_core(argv);
  const std::vector<Criterion> all = {
      {1, "chebyshev coverage", chebyshev_coverage_check},
      {2, "tanh variance bracket", tanh_bracket_check},
      {3, "injected variance accuracy", variance_accuracy_check},
      {4, "finite-depth bound vs LNS", depth_bound_check},
      {5, "depth scan ordering", depth_scan_check},
      {6, "gradient check", gradient_check},
      {7, "norm reduction accounting", reduction_check},
      {8, "speed orderings", speed_check},
      {9, "learning-rate stability", stability_check},
      {10, "variance approximation ablation", ablation_check},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const Criterion& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("[%s] %2d %-32s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
