#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sbp/gauss.hpp"
#include "sbp/io.hpp"
#include "sbp/ou.hpp"
#include "sbp/potential.hpp"
#include "sbp/stats.hpp"

namespace sbp::cli {

/// Config lookups that record every default they fall back to, so the resolved
/// document can be echoed into outputs.
class Config {
 public:
  Config(KeyValues kv, std::filesystem::path base_dir);

  bool has(const std::string& key) const { return kv_.has(key); }
  double real(const std::string& key) const;
  double real(const std::string& key, double fallback);
  long long integer(const std::string& key) const;
  long long integer(const std::string& key, long long fallback);
  std::string text(const std::string& key) const;
  std::string text(const std::string& key, const std::string& fallback);
  VectorXd vector(const std::string& key, Eigen::Index size) const;
  VectorXd vector(const std::string& key, const VectorXd& fallback);
  MatrixXd matrix(const std::string& key, Eigen::Index rows, Eigen::Index cols, const MatrixXd& fallback);
  /// Path value resolved against the directory of the config file.
  std::filesystem::path path(const std::string& key) const;

  void set(const std::string& key, const std::string& value) { kv_.set(key, value); }
  const KeyValues& resolved() const { return kv_; }

 private:
  KeyValues kv_;
  std::filesystem::path base_dir_;
};

struct RunOptions {
  std::filesystem::path config_path;
  std::filesystem::path out_dir = ".";
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

/// Reads the config file and applies the --seed override.
Config load_config(const RunOptions& opts);

/// Reference process, ρ_0, parameter box and master seed shared by all commands.
struct Problem {
  int d;
  OUParamsd params;
  GaussianDistd rho0;
  ParameterBox box;
  std::uint64_t seed;
};

Problem problem_from_config(Config& cfg);

/// Data-generating law: a Gaussian ρ_T^*, or ρ_T^ψ for a mixture potential ψ.
struct Target {
  std::string spec;
  std::optional<GaussianDistd> gaussian;
  std::optional<MixturePotential> potential;

  bool realizable() const { return potential.has_value(); }
  MatrixXd sample(const Problem& problem, Eigen::Index n, std::uint64_t seed) const;
};

Target target_from_config(Config& cfg, const Problem& problem);

struct RateStudyRow {
  long long n;
  int seed;
  double excess_kl;
  double kl_se;
  double upsilon_value;
  double fit_risk;
  double wall_time;
};

struct RateStudyReport {
  std::vector<RateStudyRow> rows;
  std::vector<long long> n_grid;
  std::vector<double> median_excess;
  std::vector<double> upsilon;
  LineFit slope;
  bool strictly_decreasing;
};

void cmd_generate(Config& cfg, const RunOptions& opts);
void cmd_fit(Config& cfg, const RunOptions& opts);
RateStudyReport cmd_rate_study(Config& cfg, const RunOptions& opts);
void cmd_bridge(Config& cfg, const RunOptions& opts);
void cmd_simulate(Config& cfg, const RunOptions& opts);
void cmd_diagnostics(Config& cfg, const RunOptions& opts);

/// File contents with '#' comment lines removed.
std::string csv_body(const std::filesystem::path& file);

}  // namespace sbp::cli
