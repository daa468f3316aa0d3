#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "commands.hpp"
#include "sbp/erm.hpp"
#include "sbp/marginal.hpp"

using namespace sbp;
using namespace sbp::cli;
namespace fs = std::filesystem;

namespace {

const char* kConfig = R"(seed = 3
d = 1
[ou]
b = 1
T = 2
[target]
kind = realizable
K = 2
weights = 0.4 0.6
mean.0 = -1.5
cov.0 = 0.4
mean.1 = 1.2
cov.1 = 0.6
[generate]
n = 4000
)";

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("sbp_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Config config_from(const std::string& text, const fs::path& base = ".") {
  std::istringstream in(text);
  return Config(KeyValues::read(in), base);
}

Dataset generate_into(const fs::path& dir, const std::string& text = kConfig) {
  Config cfg = config_from(text);
  RunOptions opts;
  opts.out_dir = dir;
  cmd_generate(cfg, opts);
  return read_dataset_file((dir / "data.txt").string());
}

}  // namespace

TEST(Config, RecordsDefaultsAndKeepsGivenValues) {
  Config cfg = config_from("a = 2\n");
  EXPECT_EQ(cfg.real("a", 5.0), 2.0);
  EXPECT_EQ(cfg.integer("n", 7), 7);
  EXPECT_EQ(cfg.resolved().get("n"), "7");
  EXPECT_THROW(cfg.real("missing"), std::out_of_range);
}

TEST(Config, ResolvesRelativePaths) {
  Config cfg = config_from("file = data.txt\nabs = /tmp/x\n", "/some/dir");
  EXPECT_EQ(cfg.path("file"), fs::path("/some/dir/data.txt"));
  EXPECT_EQ(cfg.path("abs"), fs::path("/tmp/x"));
}

TEST(Generate, RejectsNonPositiveSizeAndUnknownTarget) {
  const auto dir = scratch("reject");
  RunOptions opts;
  opts.out_dir = dir;
  Config zero = config_from(std::string(kConfig) + "n = 0\n");
  EXPECT_THROW(cmd_generate(zero, opts), std::invalid_argument);
  std::string text = kConfig;
  text.replace(text.find("kind = realizable"), 17, "kind = uniform");
  Config unknown = config_from(text);
  EXPECT_THROW(cmd_generate(unknown, opts), std::invalid_argument);
}

TEST(Generate, SeedReproducibleAndSensitive) {
  const auto a = generate_into(scratch("seed_a"));
  const auto b = generate_into(scratch("seed_b"));
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.target, "realizable:inline");
  std::string text = kConfig;
  text.replace(0, 8, "seed = 4");
  const auto c = generate_into(scratch("seed_c"), text);
  EXPECT_NE(a.samples, c.samples);
}

TEST(Generate, RealizableDataFavorsTruePotential) {
  const auto data = generate_into(scratch("favor"));
  Config cfg = config_from(kConfig);
  const Problem problem = problem_from_config(cfg);
  const Target target = target_from_config(cfg, problem);
  const MarginalModel truth(problem.params, *target.potential, problem.rho0, 4000, 1);
  const GaussianMixtured shifted({{0.4, GaussianDistd(VectorXd::Constant(1, -0.5), MatrixXd::Constant(1, 1, 0.4))},
                                  {0.6, GaussianDistd(VectorXd::Constant(1, 2.0), MatrixXd::Constant(1, 1, 0.6))}});
  const auto perturbed = truth.with_potential(from_mixture(shifted, problem.params));
  EXPECT_LT(empirical_risk(truth, data.samples), empirical_risk(perturbed, data.samples));
}

TEST(Generate, GaussianTargetMoments) {
  const std::string text = "seed = 1\nd = 2\nou.T = 1\ntarget.kind = gaussian\ntarget.mean = 1 -1\n"
                           "target.cov = 2 0.5 0.5 1\ngenerate.n = 20000\n";
  const auto data = generate_into(scratch("gauss"), text);
  const VectorXd mean = data.samples.rowwise().mean();
  EXPECT_NEAR(mean(0), 1.0, 0.05);
  EXPECT_NEAR(mean(1), -1.0, 0.05);
}

TEST(Outputs, CarryProvenanceHeaderAndStableBody) {
  const auto dir_a = scratch("prov_a"), dir_b = scratch("prov_b");
  const std::string text = "seed = 2\nd = 1\nou.T = 1\nbridge.target.mean = 0.5\n";
  for (const auto& dir : {dir_a, dir_b}) {
    Config cfg = config_from(text);
    RunOptions opts;
    opts.out_dir = dir;
    cmd_bridge(cfg, opts);
  }
  std::ifstream in(dir_a / "bridge_residuals.csv");
  std::string first, second;
  std::getline(in, first);
  std::getline(in, second);
  EXPECT_EQ(first, "# sbp bridge");
  EXPECT_EQ(second.rfind("# created ", 0), 0u);
  std::stringstream all;
  all << in.rdbuf();
  EXPECT_NE(all.str().find("# config: bridge.init.cov = 1"), std::string::npos);
  EXPECT_EQ(csv_body(dir_a / "bridge_residuals.csv"), csv_body(dir_b / "bridge_residuals.csv"));
  EXPECT_EQ(csv_body(dir_a / "bridge_residuals.csv").rfind("marginal,schur_identity", 0), 0u);
}

TEST(Fit, WritesLoadablePotential) {
  const auto dir = scratch("fit");
  std::string text = std::string(kConfig) + "[erm]\nrestarts = 1\nJ_fit = 300\n[fit]\ndata = data.txt\n";
  text.replace(text.find("n = 4000"), 8, "n = 500");
  {
    Config cfg = config_from(text);
    RunOptions opts;
    opts.out_dir = dir;
    cmd_generate(cfg, opts);
  }
  Config cfg = config_from(text, dir);
  RunOptions opts;
  opts.out_dir = dir;
  cmd_fit(cfg, opts);
  const Problem problem = problem_from_config(cfg);
  std::ifstream in(dir / "potential.txt");
  const auto psi = potential_from_key_values(KeyValues::read(in), problem.params);
  EXPECT_FALSE(psi.is_zero());
  EXPECT_TRUE(psi.bounds().has_value());
  EXPECT_EQ(psi.theta().size(), problem.box.D());
}
