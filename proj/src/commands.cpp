// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include "bhyt/commands.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "bhyt/error.hpp"
#include "json.hpp"

namespace bhyt {
namespace {

using nlohmann::json;

constexpr std::string_view kChecksSchema = "# schema: bhyt.check_bounds.v1";
constexpr std::string_view kBracketSchema = "# schema: bhyt.depth_bracket.v1";
constexpr std::string_view kScatterSchema = "# schema: bhyt.var_accuracy.v1";

// Files produced by one command, committed together once everything succeeded.
class Outputs {
 public:
  Outputs(const ExperimentConfig& cfg) : dir_(cfg.output.directory), cfg_(cfg) {}

  void csv(const std::string& name, std::string content) {
    if (cfg_.output.csv) files_.emplace_back(name, std::move(content));
  }
  void json_doc(const std::string& name, const json& doc) {
    if (cfg_.output.json) files_.emplace_back(name, doc.dump(2) + "\n");
  }

  CommandResult commit(int exit_code) {
    CommandResult r;
    r.exit_code = exit_code;
    if (!files_.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(dir_, ec);
      if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
    }
    for (const auto& [name, content] : files_) {
      const std::filesystem::path p = dir_ / name;
      write_file_atomic(p, content);
      spdlog::info("wrote {}", p.string());
      r.files.push_back(p);
    }
    return r;
  }

 private:
  std::filesystem::path dir_;
  const ExperimentConfig& cfg_;
  std::vector<std::pair<std::string, std::string>> files_;
};

struct CheckRow {
  std::string check;
  std::string parameters;
  double value = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool pass = false;
};

json to_json(const AgreementMetrics& m) {
  return {{"rmse", m.rmse}, {"r_squared", m.r_squared}, {"pearson", m.pearson},
          {"spearman", m.spearman}};
}

json dims_json(const BenchDims& d) {
  return {{"T", d.seq_len}, {"d", d.d},         {"L", d.n_layers},
          {"d_m", d.mlp_width()}, {"heads", d.n_heads}, {"vocab", d.vocab}};
}

}  // namespace

ExperimentConfig resolve_config(const CommandOptions& opts) {
  ExperimentConfig cfg = opts.config.empty() ? ExperimentConfig{} : load_config(opts.config);
  if (opts.out) cfg.output.directory = opts.out->string();
  if (opts.seed) cfg.seed = *opts.seed;
  return cfg;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += fmt::format(".tmp.{}", static_cast<long>(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw IoError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

CommandResult cmd_check_bounds(const ExperimentConfig& cfg, std::ostream& log) {
  const CheckBoundsSection& b = cfg.check_bounds;
  const RngStream root = RngStream(cfg.seed).split(11);
  std::vector<CheckRow> rows;

  std::uint64_t stream = 0;
  for (double lambda : b.lambdas) {
    for (double p : b.probabilities) {
      for (Distribution dist : kAllDistributions) {
        for (std::size_t k = 0; k < b.means.size(); ++k) {
          RngStream rng = root.split(1).split(stream++);
          const double cov =
              chebyshev_coverage(dist, b.means[k], b.stds[k], lambda, p, b.coverage_samples, rng);
          rows.push_back({"coverage",
                          fmt::format("dist={};mu={};s={};lambda={};p={}", to_string(dist),
                                      b.means[k], b.stds[k], lambda, p),
                          cov, p, 1.0, cov >= p});
        }
      }
    }
  }

  for (double kappa : b.kappas) {
    for (std::size_t i = 0; i < b.tanh_lambdas.size(); ++i) {
      RngStream rng = root.split(2).split(stream++);
      const TanhVarianceCheck t = tanh_variance_mc(b.tanh_lambdas[i], kappa, b.tanh_samples, rng);
      rows.push_back({"tanh_variance",
                      fmt::format("lambda={};kappa={};se={}", t.lambda, t.kappa,
                                  format_double(t.std_error)),
                      t.variance, t.lower, t.upper, t.within(3.0)});
    }
  }

  for (double lambda : b.lambdas) {
    for (double kappa : b.kappas) {
      for (std::size_t L : b.depths) {
        const std::string params = fmt::format("lambda={};kappa={};L={}", lambda, kappa, L);
        const double ratio = lambda * lambda * static_cast<double>(L) / (kappa * kappa);
        const bool condition = finite_depth_bound_check(lambda, kappa, L);
        rows.push_back({"depth_condition", params, ratio, 0.0, 1.0, condition});
        GainParams g;
        g.c_attn = g.c_mlp = 1.0;
        g.lambda_attn = g.lambda_mlp = lambda;
        g.kappa = kappa;
        const ExactDepthComparison cmp = compare_bhyt_lns_exact(L, g, 1.0);
        rows.push_back({"depth_trajectory", params, cmp.strictly_below ? 1.0 : 0.0, 0.0, 1.0,
                        !condition || cmp.strictly_below});
      }
    }
  }

  std::ostringstream csv;
  csv << kChecksSchema << "\ncheck,parameters,value,lower,upper,pass\n";
  json arr = json::array();
  std::size_t failures = 0;
  for (const CheckRow& r : rows) {
    csv << r.check << ',' << r.parameters << ',' << format_double(r.value) << ','
        << format_double(r.lower) << ',' << format_double(r.upper) << ','
        << (r.pass ? "true" : "false") << '\n';
    arr.push_back({{"check", r.check},
                   {"parameters", r.parameters},
                   {"value", r.value},
                   {"lower", r.lower},
                   {"upper", r.upper},
                   {"pass", r.pass}});
    failures += !r.pass;
    log << fmt::format("{:<17} {:<48} {:>12.6g}  {}\n", r.check, r.parameters, r.value,
                       r.pass ? "PASS" : "FAIL");
  }
  log << fmt::format("{} checks, {} failed\n", rows.size(), failures);

  Outputs out(cfg);
  out.csv("check_bounds.csv", csv.str());
  out.json_doc("check_bounds.json",
               {{"seed", cfg.seed}, {"checks", arr}, {"failures", failures}, {"pass", failures == 0}});
  return out.commit(failures == 0 ? 0 : 1);
}

CommandResult cmd_depth_scan(const ExperimentConfig& cfg, std::ostream& log) {
  const DepthScanSection& s = cfg.depth_scan;
  const ScanDims dims = cfg.scan_dims();
  std::vector<std::uint64_t> seeds(s.seeds);
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = cfg.seed + i;

  Outputs out(cfg);
  json summary = json::array();
  for (Placement p : s.placements) {
    spdlog::info("depth scan: {} (L={}, {} seeds)", to_string(p), s.n_layers, s.seeds);
    const std::vector<ScanRun> runs = monte_carlo_depth_scan(s.n_layers, p, dims, seeds);

    std::ostringstream csv;
    write_layer_stats_header(csv);
    std::vector<double> finals;
    std::size_t diverged = 0;
    for (const ScanRun& run : runs) {
      const std::string id = fmt::format("{}-seed{}", to_string(p), run.seed);
      for (const LayerStatsRecord& r : scan_records(run, id)) write_layer_stats_row(csv, r);
      if (run.diverged_at) {
        ++diverged;
      } else {
        finals.push_back(run.layers.back().s2_out);
      }
    }
    out.csv(fmt::format("depth_scan_{}.csv", to_string(p)), csv.str());
    const double med = finals.empty() ? NAN : median(finals);
    log << fmt::format("{:<14} median final variance {:>12.6g}  diverged {}/{}\n", to_string(p),
                       med, diverged, runs.size());
    json entry = {{"placement", to_string(p)},
                  {"median_final_variance", med},
                  {"diverged_runs", diverged}};

    if (p == Placement::BHyT) {
      std::ostringstream bcsv;
      bcsv << kBracketSchema << "\nseed,layer,mc_variance,lower,upper,inside\n";
      std::size_t inside = 0, total = 0;
      for (const ScanRun& run : runs) {
        if (run.diverged_at) continue;
        const Bracket br = s.rho1 ? bracket_for_run(run, *s.rho1, *s.rho2)
                                  : bracket_for_run(run, true);
        const std::size_t L = run.layers.size();
        for (std::size_t i = 0; i < L; ++i) {
          const double lo = i + 1 < L ? br.lower.s2_x[i + 1] : br.lower.s2_out;
          const double hi = i + 1 < L ? br.upper.s2_x[i + 1] : br.upper.s2_out;
          const double mc = run.layers[i].s2_out;
          const bool in = lo <= mc && mc <= hi;
          inside += in;
          ++total;
          bcsv << run.seed << ',' << run.layers[i].layer << ',' << format_double(mc) << ','
               << format_double(lo) << ',' << format_double(hi) << ',' << (in ? "true" : "false")
               << '\n';
        }
      }
      out.csv("depth_scan_bhyt_bracket.csv", bcsv.str());
      const double coverage = total ? static_cast<double>(inside) / total : NAN;
      log << fmt::format("{:<14} bracket coverage {:.3f} ({} of {} rows)\n", "", coverage, inside,
                         total);
      entry["bracket_coverage"] = coverage;
    }
    summary.push_back(entry);
  }
  out.json_doc("depth_scan_summary.json",
               {{"seed", cfg.seed}, {"L", s.n_layers}, {"seeds", s.seeds}, {"placements", summary}});
  return out.commit(0);
}

CommandResult cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  TrainConfig tc = cfg.train_config();
  tc.run_id = fmt::format("{}-seed{}", to_string(tc.placement), tc.seed);
  spdlog::info("training {} for {} steps", tc.run_id, tc.steps);
  const TrainReport rep = train(tc);

  json eval = json::array();
  for (const EvalPoint& e : rep.eval) eval.push_back({{"step", e.step}, {"loss", e.loss}});
  const json doc = {
      {"run_id", rep.run_id},
      {"placement", to_string(rep.placement)},
      {"seed", rep.seed},
      {"lr", rep.lr},
      {"steps_completed", rep.steps_completed},
      {"diverged", rep.diverged},
      {"diverged_at_step", rep.diverged_at_step},
      {"initial_eval_loss", rep.initial_eval_loss},
      {"final_eval_loss", rep.final_eval_loss},
      {"final_perplexity", rep.final_perplexity},
      {"initial_train_loss", rep.initial_train_loss()},
      {"final_train_loss", rep.final_train_loss()},
      {"train_loss", rep.train_loss},
      {"eval", eval},
      {"estimator_refreshes", rep.estimator_refreshes},
      {"reductions_per_forward", rep.reductions_per_forward},
      {"wall_seconds", rep.wall_seconds},
      {"mean_step_seconds", rep.mean_step_seconds},
      {"median_step_seconds", rep.median_step_seconds},
      {"init_scheme", rep.init_scheme},
      {"config", json::parse(config_to_json(cfg))},
  };

  std::ostringstream csv;
  write_layer_stats_header(csv);
  for (const LayerStatsRecord& r : rep.layer_stats) write_layer_stats_row(csv, r);

  log << fmt::format("{}: steps {}  eval loss {:.4f} -> {:.4f}  perplexity {:.3f}{}\n", rep.run_id,
                     rep.steps_completed, rep.initial_eval_loss, rep.final_eval_loss,
                     rep.final_perplexity,
                     rep.diverged ? fmt::format("  DIVERGED at step {}", rep.diverged_at_step)
                                  : std::string());
  Outputs out(cfg);
  out.json_doc("train_report.json", doc);
  out.csv("layer_stats.csv", csv.str());
  return out.commit(0);
}

CommandResult cmd_bench(const ExperimentConfig& cfg, std::ostream& log) {
  const BenchSection& b = cfg.bench;
  const BenchOptions opts = cfg.bench_options();
  json rows = json::array();
  std::vector<std::vector<double>> rep_medians(b.placements.size());
  std::vector<BenchResult> last;
  for (std::size_t rep = 0; rep < b.repetitions; ++rep) {
    spdlog::info("bench repetition {}/{}", rep + 1, b.repetitions);
    last = b.mode == BenchMode::Forward
               ? bench_forward_paired(b.placements, b.dims, opts)
               : bench_generate_paired(b.placements, b.prompt_len, b.new_tokens, b.dims, opts);
    for (std::size_t j = 0; j < last.size(); ++j) {
      const BenchResult& r = last[j];
      rep_medians[j].push_back(r.median_seconds);
      json row = {{"repetition", rep},
                  {"placement", to_string(r.placement)},
                  {"mode", to_string(r.mode)},
                  {"dims", dims_json(r.dims)},
                  {"iterations", r.iterations},
                  {"warmup", r.warmup},
                  {"threads", r.threads},
                  {"median_seconds", r.median_seconds},
                  {"p10_seconds", r.p10_seconds},
                  {"p90_seconds", r.p90_seconds},
                  {"mean_seconds", r.mean_seconds},
                  {"samples", r.samples},
                  {"blas_core", r.blas_core},
                  {"timer_resolution_seconds", r.timer_resolution_seconds},
                  {"warning", r.warning ? json(*r.warning) : json(nullptr)}};
      if (r.mode == BenchMode::Generate) {
        row["prompt_len"] = r.prompt_len;
        row["new_tokens"] = r.new_tokens;
        row["tokens_per_second"] = r.tokens_per_second;
      }
      if (r.warning) spdlog::warn("{}: {}", to_string(r.placement), *r.warning);
      rows.push_back(row);
    }
  }

  log << fmt::format("{} bench, T={} d={} L={}, {} repetitions x {} iterations, BLAS core {}\n",
                     to_string(b.mode), b.dims.seq_len, b.dims.d, b.dims.n_layers, b.repetitions,
                     b.iterations, last.empty() ? std::string() : last.front().blas_core);
  log << fmt::format("{:<16} {:>12} {:>12} {:>12}{}\n", "placement", "median [ms]", "min rep",
                     "max rep", b.mode == BenchMode::Generate ? "   tokens/s" : "");
  json summary = json::array();
  for (std::size_t j = 0; j < b.placements.size(); ++j) {
    const auto& m = rep_medians[j];
    const double med = median(m);
    const auto [lo, hi] = std::minmax_element(m.begin(), m.end());
    std::string tps;
    json entry = {{"placement", to_string(b.placements[j])},
                  {"median_of_repetition_medians", med},
                  {"repetition_medians", m}};
    if (b.mode == BenchMode::Generate) {
      const double t = static_cast<double>(b.new_tokens) / med;
      entry["tokens_per_second"] = t;
      tps = fmt::format(" {:>10.2f}", t);
    }
    summary.push_back(entry);
    log << fmt::format("{:<16} {:>12.3f} {:>12.3f} {:>12.3f}{}\n", to_string(b.placements[j]),
                       1e3 * med, 1e3 * *lo, 1e3 * *hi, tps);
  }
  Outputs out(cfg);
  out.json_doc("bench.json", {{"seed", cfg.seed}, {"rows", rows}, {"summary", summary}});
  return out.commit(0);
}

CommandResult cmd_var_accuracy(const ExperimentConfig& cfg, std::ostream& log) {
  const VarAccuracyConfig vc = cfg.var_accuracy_config();
  spdlog::info("variance accuracy: {} layers, {} inputs", vc.n_layers, vc.n_inputs);
  const VarAccuracyResult res = variance_accuracy(vc);

  std::ostringstream csv;
  csv << kScatterSchema << "\ninput,layer,injected_variance,exact_variance\n";
  for (const VarPoint& p : res.points) {
    csv << p.input << ',' << p.layer << ',' << format_double(p.injected) << ','
        << format_double(p.exact) << '\n';
  }
  const AgreementMetrics& m = res.metrics;
  log << fmt::format("points {}  RMSE {:.6g}  R2 {:.6f}  Pearson {:.6f}  Spearman {:.6f}\n",
                     res.points.size(), m.rmse, m.r_squared, m.pearson, m.spearman);
  Outputs out(cfg);
  out.csv("var_accuracy.csv", csv.str());
  out.json_doc("var_accuracy_metrics.json", {{"seed", vc.seed},
                                             {"placement", to_string(vc.placement)},
                                             {"points", res.points.size()},
                                             {"metrics", to_json(m)}});
  return out.commit(0);
}

}  // namespace bhyt
