// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0
//
// bhyt: experiment command-line front end.

#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "bhyt/bench.hpp"
#include "bhyt/commands.hpp"
#include "bhyt/error.hpp"

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("bhyt");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("BHYT_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    if (level != "info") spdlog::warn("BHYT_LOG='{}' not recognized; using info", level);
    spdlog::set_level(spdlog::level::info);
  }
}

}  // namespace

int main(int argc, char** argv) {
  bhyt::select_blas_core(argv);
  setup_logging();

  CLI::App app{"Bounded hyperbolic-tangent normalization experiments"};
  app.require_subcommand(1);

  using Command = std::function<bhyt::CommandResult(const bhyt::ExperimentConfig&, std::ostream&)>;
  const std::map<std::string, std::pair<std::string, Command>> commands = {
      {"check-bounds", {"Coverage, tanh-variance and finite-depth checks", bhyt::cmd_check_bounds}},
      {"depth-scan", {"Monte-Carlo variance scan over depth", bhyt::cmd_depth_scan}},
      {"train", {"Train the toy language model", bhyt::cmd_train}},
      {"bench", {"Forward or generation benchmark", bhyt::cmd_bench}},
      {"var-accuracy", {"Injected vs exact variance scatter", bhyt::cmd_var_accuracy}},
  };

  std::map<std::string, bhyt::CommandOptions> options;
  std::map<std::string, std::string> out_dirs;
  std::map<std::string, std::uint64_t> seeds;
  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    bhyt::CommandOptions& o = options[name];
    sub->add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dirs[name], "Output directory (overrides output.directory)");
    sub->add_option("--seed", seeds[name], "Root seed (overrides the config seed)");
  }

  CLI11_PARSE(app, argc, argv);

  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.get_subcommand(name);
    if (!sub->parsed()) continue;
    bhyt::CommandOptions o = options[name];
    if (sub->count("--out")) o.out = out_dirs[name];
    if (sub->count("--seed")) o.seed = seeds[name];
    try {
      const bhyt::ExperimentConfig cfg = bhyt::resolve_config(o);
      return entry.second(cfg, std::cout).exit_code;
    } catch (const bhyt::ConfigError& e) {
      spdlog::error("configuration error: {}", e.what());
      return 2;
    } catch (const std::exception& e) {
      spdlog::error("{} failed: {}", name, e.what());
      return 3;
    }
  }
  return 0;
}
