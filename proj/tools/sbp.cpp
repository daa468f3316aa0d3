#include <cstdint>
#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace sbp::cli;
  CLI::App app{"Schrödinger potential estimation experiments"};
  app.require_subcommand(1);

  const std::map<std::string, std::pair<std::string, std::function<void(Config&, const RunOptions&)>>> commands{
      {"generate", {"Draw a dataset from the configured target", cmd_generate}},
      {"fit", {"Fit a mixture potential by empirical risk minimization", cmd_fit}},
      {"rate-study", {"Excess KL across sample sizes and seeds", [](Config& c, const RunOptions& o) { cmd_rate_study(c, o); }}},
      {"bridge", {"Solve the Gaussian bridge and report residuals", cmd_bridge}},
      {"simulate", {"Simulate the reference or controlled process", cmd_simulate}},
      {"diagnostics", {"Tabulate the bound constants and tail diagnostics", cmd_diagnostics}},
  };

  RunOptions opts;
  std::uint64_t seed = 0;
  std::function<void(Config&, const RunOptions&)> selected;
  for (const auto& [name, entry] : commands) {
    auto* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", opts.config_path, "Config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opts.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--seed", seed, "Master seed, overrides the config");
    sub->add_option("--threads", opts.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    sub->callback([&, sub, run = entry.second] {
      if (sub->count("--seed")) opts.seed = seed;
      selected = run;
    });
  }

  CLI11_PARSE(app, argc, argv);
  try {
    Config cfg = load_config(opts);
    selected(cfg, opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
