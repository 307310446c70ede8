// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include "bhyt/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "bhyt/error.hpp"
#include "json.hpp"

namespace bhyt {
namespace {

using nlohmann::json;

std::string join_path(const std::string& prefix, std::string_view key) {
  return prefix.empty() ? std::string(key) : prefix + "." + std::string(key);
}

std::string type_name(const json& j) { return j.type_name(); }

// Reads the keys of one JSON object and rejects whatever was not consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail_type(path_.empty() ? "<root>" : path_, "an object", j_);
  }

  template <typename F>
  void with(std::string_view key, F&& read) {
    seen_.insert(std::string(key));
    const auto it = j_.find(std::string(key));
    if (it == j_.end()) return;
    read(*it, join_path(path_, key));
  }

  void number(std::string_view key, double& out) {
    with(key, [&](const json& v, const std::string& p) { out = as_number(v, p); });
  }
  void optional_number(std::string_view key, std::optional<double>& out) {
    with(key, [&](const json& v, const std::string& p) {
      if (v.is_null()) {
        out.reset();
      } else {
        out = as_number(v, p);
      }
    });
  }
  template <typename Int>
  void integer(std::string_view key, Int& out, long long min_value = 0) {
    with(key, [&](const json& v, const std::string& p) {
      out = static_cast<Int>(as_integer(v, p, min_value));
    });
  }
  void u64(std::string_view key, std::uint64_t& out) {
    with(key, [&](const json& v, const std::string& p) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        fail_type(p, "a non-negative integer", v);
      }
      out = v.get<std::uint64_t>();
    });
  }
  void boolean(std::string_view key, bool& out) {
    with(key, [&](const json& v, const std::string& p) {
      if (!v.is_boolean()) fail_type(p, "a boolean", v);
      out = v.get<bool>();
    });
  }
  void string(std::string_view key, std::string& out) {
    with(key, [&](const json& v, const std::string& p) { out = as_string(v, p); });
  }
  template <typename E>
  void enumeration(std::string_view key, E& out, E (*parse)(std::string_view)) {
    with(key, [&](const json& v, const std::string& p) { out = as_enum(v, p, parse); });
  }
  template <typename E>
  void enum_list(std::string_view key, std::vector<E>& out, E (*parse)(std::string_view)) {
    with(key, [&](const json& v, const std::string& p) {
      if (!v.is_array() || v.empty()) fail_type(p, "a non-empty array", v);
      out.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(as_enum(v[i], p + "[" + std::to_string(i) + "]", parse));
      }
    });
  }
  void number_list(std::string_view key, std::vector<double>& out) {
    with(key, [&](const json& v, const std::string& p) {
      if (!v.is_array() || v.empty()) fail_type(p, "a non-empty array", v);
      out.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(as_number(v[i], p + "[" + std::to_string(i) + "]"));
      }
    });
  }
  void size_list(std::string_view key, std::vector<std::size_t>& out) {
    with(key, [&](const json& v, const std::string& p) {
      if (!v.is_array() || v.empty()) fail_type(p, "a non-empty array", v);
      out.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(
            static_cast<std::size_t>(as_integer(v[i], p + "[" + std::to_string(i) + "]", 1)));
      }
    });
  }
  void object(std::string_view key, const std::function<void(Section&)>& read) {
    with(key, [&](const json& v, const std::string& p) {
      Section s(v, p);
      read(s);
      s.finish();
    });
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError("unknown key '" + join_path(path_, it.key()) + "'");
      }
    }
  }

  [[noreturn]] static void fail_type(const std::string& path, const std::string& want,
                                     const json& got) {
    throw ConfigError("field '" + path + "': expected " + want + ", got " + type_name(got));
  }
  [[noreturn]] static void fail_value(const std::string& path, const std::string& why) {
    throw ConfigError("field '" + path + "': " + why);
  }

 private:
  static double as_number(const json& v, const std::string& p) {
    if (!v.is_number()) fail_type(p, "a number", v);
    return v.get<double>();
  }
  static long long as_integer(const json& v, const std::string& p, long long min_value) {
    if (!v.is_number_integer()) fail_type(p, "an integer", v);
    const long long x = v.get<long long>();
    if (x < min_value) fail_value(p, "must be >= " + std::to_string(min_value));
    return x;
  }
  static std::string as_string(const json& v, const std::string& p) {
    if (!v.is_string()) fail_type(p, "a string", v);
    return v.get<std::string>();
  }
  template <typename E>
  static E as_enum(const json& v, const std::string& p, E (*parse)(std::string_view)) {
    const std::string s = as_string(v, p);
    try {
      return parse(s);
    } catch (const Error& e) {
      fail_value(p, e.what());
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::pair<std::size_t, std::size_t> line_and_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

BenchMode bench_mode_from_string(std::string_view s) {
  if (s == "forward") return BenchMode::Forward;
  if (s == "generate") return BenchMode::Generate;
  throw ParameterError("unknown bench mode '" + std::string(s) + "'");
}

void check_config(const ExperimentConfig& c) {
  const auto wrap = [](const std::string& section, const auto& validate) {
    try {
      validate();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError("section '" + section + "': " + e.what());
    }
  };
  wrap("model/norm/train", [&] { c.train_config().validate(); });
  wrap("bench", [&] {
    c.bench.dims.validate();
    c.bench_options().validate();
    if (c.bench.repetitions == 0) throw ParameterError("repetitions must be >= 1");
    if (c.bench.new_tokens < 16) throw ParameterError("new_tokens must be >= 16");
    if (c.bench.prompt_len == 0 || c.bench.prompt_len > c.bench.dims.seq_len) {
      throw ParameterError("prompt_len must be in [1, T]");
    }
  });
  wrap("depth_scan", [&] {
    if (c.depth_scan.n_layers == 0 || c.depth_scan.seeds == 0 || c.depth_scan.d == 0 ||
        c.depth_scan.d_m == 0 || c.depth_scan.seq_len == 0) {
      throw ParameterError("L, seeds, d, d_m and T must be positive");
    }
    for (const auto& rho : {c.depth_scan.rho1, c.depth_scan.rho2}) {
      if (rho && !(*rho >= -1.0 && *rho <= 1.0)) throw ParameterError("rho must lie in [-1, 1]");
    }
    if (c.depth_scan.rho1.has_value() != c.depth_scan.rho2.has_value()) {
      throw ParameterError("set both rho1 and rho2 or neither");
    }
  });
  wrap("check_bounds", [&] {
    const CheckBoundsSection& b = c.check_bounds;
    for (double l : b.lambdas) {
      if (!(l > 0.0)) throw ParameterError("lambdas must be positive");
    }
    for (double k : b.kappas) {
      if (!(k > 1.0)) throw ParameterError("kappas must exceed 1");
    }
    for (double p : b.probabilities) {
      if (!(p > 0.0 && p < 1.0)) throw ParameterError("probabilities must lie in (0, 1)");
    }
    for (double s : b.stds) {
      if (!(s > 0.0)) throw ParameterError("stds must be positive");
    }
    if (b.means.size() != b.stds.size()) {
      throw ParameterError("means and stds must have the same length");
    }
    for (double l : b.tanh_lambdas) {
      if (!(l > 0.0)) throw ParameterError("tanh_lambdas must be positive");
    }
    if (b.coverage_samples == 0 || b.tanh_samples < 2) {
      throw ParameterError("sample counts must be positive");
    }
  });
  wrap("var_accuracy", [&] { c.var_accuracy_config().validate(); });
  if (c.output.directory.empty()) throw ConfigError("field 'output.directory': must not be empty");
}

}  // namespace

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t;
  t.n_layers = model.n_layers;
  t.d = model.d;
  t.d_v = model.d_v;
  t.d_m = model.d_m;
  t.seq_len = model.seq_len;
  t.n_heads = model.n_heads;
  t.activation = model.activation;
  t.placement = norm.kind;
  t.norm = norm.hyper;
  t.refresh_interval = norm.refresh_interval;
  t.batch_size = train.batch_size;
  t.steps = train.steps;
  t.lr = train.lr;
  t.warmup_ratio = train.warmup_ratio;
  t.weight_decay = train.weight_decay;
  t.min_lr_ratio = train.min_lr_ratio;
  t.optimizer = train.optimizer;
  t.beta1 = train.beta1;
  t.beta2 = train.beta2;
  t.adam_eps = train.adam_eps;
  t.init_std = train.init_std;
  t.stats_interval = train.stats_interval;
  t.eval_interval = train.eval_interval;
  t.eval_windows = train.eval_windows;
  t.divergence_factor = train.divergence_factor;
  t.divergence_check_interval = train.divergence_check_interval;
  t.corpus_path = train.corpus;
  t.seed = seed;
  return t;
}

ScanDims ExperimentConfig::scan_dims() const {
  ScanDims s;
  s.d = depth_scan.d;
  s.d_m = depth_scan.d_m;
  s.seq_len = depth_scan.seq_len;
  s.n_heads = model.n_heads;
  s.activation = model.activation;
  s.attention = depth_scan.attention;
  s.hyper = norm.hyper;
  return s;
}

BenchOptions ExperimentConfig::bench_options() const {
  BenchOptions o;
  o.iterations = bench.iterations;
  o.warmup = bench.warmup;
  o.threads = bench.threads;
  o.seed = seed;
  return o;
}

VarAccuracyConfig ExperimentConfig::var_accuracy_config() const {
  VarAccuracyConfig v = var_accuracy.cfg;
  v.hyper = norm.hyper;
  v.activation = model.activation;
  v.seed = seed;
  return v;
}

ExperimentConfig parse_config(std::string_view text, std::string_view source) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_and_column(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ConfigError(std::string(source) + ":" + std::to_string(line) + ":" +
                      std::to_string(col) + ": syntax error: " + e.what());
  }

  ExperimentConfig c;
  Section top(root, "");
  top.u64("seed", c.seed);
  top.object("model", [&](Section& s) {
    s.integer("L", c.model.n_layers, 1);
    s.integer("d", c.model.d, 1);
    s.integer("d_V", c.model.d_v, 1);
    s.integer("d_m", c.model.d_m, 1);
    s.integer("T", c.model.seq_len, 1);
    s.integer("heads", c.model.n_heads, 1);
    s.enumeration("activation", c.model.activation, &activation_from_string);
  });
  top.object("norm", [&](Section& s) {
    s.enumeration("kind", c.norm.kind, &placement_from_string);
    s.number("lambda_attn", c.norm.hyper.lambda_attn);
    s.number("lambda_mlp", c.norm.hyper.lambda_mlp);
    s.number("kappa", c.norm.hyper.kappa);
    s.number("eps", c.norm.hyper.eps);
    s.enumeration("scale_grad", c.norm.hyper.scale_grad, &scale_grad_from_string);
    s.integer("refresh_interval", c.norm.refresh_interval, 1);
    s.number("alpha_dyt_attn", c.norm.hyper.alpha_dyt_attn);
    s.number("alpha_dyt_mlp", c.norm.hyper.alpha_dyt_mlp);
    s.number("alpha_dyt_final", c.norm.hyper.alpha_dyt_final);
  });
  top.object("train", [&](Section& s) {
    s.integer("batch_size", c.train.batch_size, 1);
    s.integer("steps", c.train.steps, 0);
    s.number("lr", c.train.lr);
    s.number("warmup_ratio", c.train.warmup_ratio);
    s.number("weight_decay", c.train.weight_decay);
    s.number("min_lr_ratio", c.train.min_lr_ratio);
    s.enumeration("optimizer", c.train.optimizer, &optimizer_from_string);
    s.number("beta1", c.train.beta1);
    s.number("beta2", c.train.beta2);
    s.number("adam_eps", c.train.adam_eps);
    s.number("init_std", c.train.init_std);
    s.integer("stats_interval", c.train.stats_interval, 0);
    s.integer("eval_interval", c.train.eval_interval, 0);
    s.integer("eval_windows", c.train.eval_windows, 1);
    s.number("divergence_factor", c.train.divergence_factor);
    s.integer("divergence_check_interval", c.train.divergence_check_interval, 1);
    s.string("corpus", c.train.corpus);
  });
  top.object("bench", [&](Section& s) {
    s.enum_list("placements", c.bench.placements, &placement_from_string);
    s.integer("T", c.bench.dims.seq_len, 1);
    s.integer("d", c.bench.dims.d, 1);
    s.integer("L", c.bench.dims.n_layers, 0);
    s.integer("d_m", c.bench.dims.d_m, 0);
    s.integer("heads", c.bench.dims.n_heads, 1);
    s.integer("iterations", c.bench.iterations, 1);
    s.integer("warmup", c.bench.warmup, 0);
    s.integer("repetitions", c.bench.repetitions, 1);
    s.integer("threads", c.bench.threads, 1);
    s.enumeration("mode", c.bench.mode, &bench_mode_from_string);
    s.integer("prompt_len", c.bench.prompt_len, 1);
    s.integer("new_tokens", c.bench.new_tokens, 1);
  });
  top.object("depth_scan", [&](Section& s) {
    s.enum_list("placements", c.depth_scan.placements, &placement_from_string);
    s.integer("L", c.depth_scan.n_layers, 1);
    s.integer("seeds", c.depth_scan.seeds, 1);
    s.integer("d", c.depth_scan.d, 1);
    s.integer("d_m", c.depth_scan.d_m, 1);
    s.integer("T", c.depth_scan.seq_len, 1);
    s.enumeration("attention", c.depth_scan.attention, &attention_mode_from_string);
    s.optional_number("rho1", c.depth_scan.rho1);
    s.optional_number("rho2", c.depth_scan.rho2);
  });
  top.object("check_bounds", [&](Section& s) {
    s.number_list("lambdas", c.check_bounds.lambdas);
    s.number_list("kappas", c.check_bounds.kappas);
    s.size_list("depths", c.check_bounds.depths);
    s.number_list("probabilities", c.check_bounds.probabilities);
    s.number_list("means", c.check_bounds.means);
    s.number_list("stds", c.check_bounds.stds);
    s.integer("coverage_samples", c.check_bounds.coverage_samples, 1);
    s.number_list("tanh_lambdas", c.check_bounds.tanh_lambdas);
    s.integer("tanh_samples", c.check_bounds.tanh_samples, 2);
  });
  top.object("var_accuracy", [&](Section& s) {
    VarAccuracyConfig& v = c.var_accuracy.cfg;
    s.enumeration("placement", v.placement, &placement_from_string);
    s.integer("L", v.n_layers, 1);
    s.integer("d", v.d, 1);
    s.integer("d_V", v.d_v, 1);
    s.integer("d_m", v.d_m, 1);
    s.integer("T", v.seq_len, 1);
    s.integer("heads", v.n_heads, 1);
    s.integer("inputs", v.n_inputs, 1);
    s.enumeration("attention", v.attention, &attention_mode_from_string);
    s.number("init_std", v.init_std);
    s.boolean("identity_weights", v.identity_weights);
  });
  top.object("output", [&](Section& s) {
    s.string("directory", c.output.directory);
    s.with("formats", [&](const json& v, const std::string& p) {
      if (!v.is_array() || v.empty()) Section::fail_type(p, "a non-empty array", v);
      c.output.csv = c.output.json = false;
      for (const json& f : v) {
        if (!f.is_string()) Section::fail_type(p, "an array of strings", f);
        const std::string name = f.get<std::string>();
        if (name == "csv") {
          c.output.csv = true;
        } else if (name == "json") {
          c.output.json = true;
        } else {
          Section::fail_value(p, "unknown format '" + name + "' (expected csv or json)");
        }
      }
    });
  });
  top.finish();
  check_config(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

std::string config_to_json(const ExperimentConfig& c) {
  const auto names = [](const std::vector<Placement>& ps) {
    json a = json::array();
    for (Placement p : ps) a.push_back(std::string(to_string(p)));
    return a;
  };
  const NormHyper& h = c.norm.hyper;
  const VarAccuracyConfig& v = c.var_accuracy.cfg;
  json formats = json::array();
  if (c.output.csv) formats.push_back("csv");
  if (c.output.json) formats.push_back("json");
  const json j = {
      {"seed", c.seed},
      {"model",
       {{"L", c.model.n_layers},
        {"d", c.model.d},
        {"d_V", c.model.d_v},
        {"d_m", c.model.d_m},
        {"T", c.model.seq_len},
        {"heads", c.model.n_heads},
        {"activation", to_string(c.model.activation)}}},
      {"norm",
       {{"kind", to_string(c.norm.kind)},
        {"lambda_attn", h.lambda_attn},
        {"lambda_mlp", h.lambda_mlp},
        {"kappa", h.kappa},
        {"eps", h.eps},
        {"scale_grad", to_string(h.scale_grad)},
        {"refresh_interval", c.norm.refresh_interval},
        {"alpha_dyt_attn", h.alpha_dyt_attn},
        {"alpha_dyt_mlp", h.alpha_dyt_mlp},
        {"alpha_dyt_final", h.alpha_dyt_final}}},
      {"train",
       {{"batch_size", c.train.batch_size},
        {"steps", c.train.steps},
        {"lr", c.train.lr},
        {"warmup_ratio", c.train.warmup_ratio},
        {"weight_decay", c.train.weight_decay},
        {"min_lr_ratio", c.train.min_lr_ratio},
        {"optimizer", to_string(c.train.optimizer)},
        {"beta1", c.train.beta1},
        {"beta2", c.train.beta2},
        {"adam_eps", c.train.adam_eps},
        {"init_std", c.train.init_std},
        {"stats_interval", c.train.stats_interval},
        {"eval_interval", c.train.eval_interval},
        {"eval_windows", c.train.eval_windows},
        {"divergence_factor", c.train.divergence_factor},
        {"divergence_check_interval", c.train.divergence_check_interval},
        {"corpus", c.train.corpus}}},
      {"bench",
       {{"placements", names(c.bench.placements)},
        {"T", c.bench.dims.seq_len},
        {"d", c.bench.dims.d},
        {"L", c.bench.dims.n_layers},
        {"d_m", c.bench.dims.d_m},
        {"heads", c.bench.dims.n_heads},
        {"iterations", c.bench.iterations},
        {"warmup", c.bench.warmup},
        {"repetitions", c.bench.repetitions},
        {"threads", c.bench.threads},
        {"mode", to_string(c.bench.mode)},
        {"prompt_len", c.bench.prompt_len},
        {"new_tokens", c.bench.new_tokens}}},
      {"depth_scan",
       {{"placements", names(c.depth_scan.placements)},
        {"L", c.depth_scan.n_layers},
        {"seeds", c.depth_scan.seeds},
        {"d", c.depth_scan.d},
        {"d_m", c.depth_scan.d_m},
        {"T", c.depth_scan.seq_len},
        {"attention", to_string(c.depth_scan.attention)},
        {"rho1", c.depth_scan.rho1 ? json(*c.depth_scan.rho1) : json(nullptr)},
        {"rho2", c.depth_scan.rho2 ? json(*c.depth_scan.rho2) : json(nullptr)}}},
      {"check_bounds",
       {{"lambdas", c.check_bounds.lambdas},
        {"kappas", c.check_bounds.kappas},
        {"depths", c.check_bounds.depths},
        {"probabilities", c.check_bounds.probabilities},
        {"means", c.check_bounds.means},
        {"stds", c.check_bounds.stds},
        {"coverage_samples", c.check_bounds.coverage_samples},
        {"tanh_lambdas", c.check_bounds.tanh_lambdas},
        {"tanh_samples", c.check_bounds.tanh_samples}}},
      {"var_accuracy",
       {{"placement", to_string(v.placement)},
        {"L", v.n_layers},
        {"d", v.d},
        {"d_V", v.d_v},
        {"d_m", v.d_m},
        {"T", v.seq_len},
        {"heads", v.n_heads},
        {"inputs", v.n_inputs},
        {"attention", to_string(v.attention)},
        {"init_std", v.init_std},
        {"identity_weights", v.identity_weights}}},
      {"output", {{"directory", c.output.directory}, {"formats", formats}}},
  };
  return j.dump(2) + "\n";
}

}  // namespace bhyt
