#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sbp/bridge.hpp"
#include "sbp/diagnostics.hpp"
#include "sbp/erm.hpp"
#include "sbp/marginal.hpp"
#include "sbp/rng.hpp"
#include "sbp/simulate.hpp"

namespace sbp::cli {
namespace fs = std::filesystem;

namespace {

// Stage indices for seeds derived from the master seed.
enum Stage : std::uint64_t { kGenerate = 1, kFit, kBridge, kSimulate, kDiagnostics, kInfimum, kCells = 1000 };

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

/// Output file with a provenance header: command, creation time and the resolved config.
std::ofstream open_output(const RunOptions& opts, const std::string& name, const std::string& command,
                          const Config& cfg) {
  fs::create_directories(opts.out_dir);
  const fs::path file = opts.out_dir / name;
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open '" + file.string() + "' for writing");
  out << "# sbp " << command << '\n';
  out << "# created " << timestamp() << '\n';
  for (const auto& [k, v] : cfg.resolved().entries()) out << "# config: " << k << " = " << v << '\n';
  return out;
}

std::vector<double> values_of(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::vector<long long> integer_list(const VectorXd& v) {
  std::vector<long long> out;
  for (double x : values_of(v)) {
    if (x != std::floor(x)) throw std::invalid_argument("expected integers, got " + format_double(x));
    out.push_back(static_cast<long long>(x));
  }
  return out;
}

ERMConfig erm_from_config(Config& cfg, const Problem& problem) {
  ERMConfig erm;
  erm.box = problem.box;
  erm.restarts = static_cast<int>(cfg.integer("erm.restarts", 3));
  erm.max_iters = static_cast<int>(cfg.integer("erm.max_iters", 200));
  erm.grad_tol = cfg.real("erm.grad_tol", 1e-6);
  erm.J_fit = static_cast<std::size_t>(cfg.integer("erm.J_fit", 2000));
  erm.optimizer = parse_optimizer_kind(cfg.text("erm.optimizer", to_string(OptimizerKind::quasi_newton_box)));
  erm.validate();
  return erm;
}

ERMConfig with_seeds(ERMConfig erm, std::uint64_t stage_seed) {
  erm.bank_seed = stream_seed(stage_seed, 1);
  erm.opt_seed = stream_seed(stage_seed, 2);
  return erm;
}

GaussianDistd gaussian_from_config(Config& cfg, const std::string& prefix, int d) {
  const VectorXd mean = cfg.vector(prefix + ".mean", VectorXd::Zero(d));
  const MatrixXd cov = cfg.matrix(prefix + ".cov", d, d, MatrixXd::Identity(d, d));
  if (mean.size() != d) throw std::invalid_argument(prefix + ".mean: expected " + std::to_string(d) + " entries");
  return GaussianDistd(mean, cov);
}

MixturePotential load_potential(const Config& cfg, const std::string& key, const OUParamsd& params) {
  std::ifstream in(cfg.path(key));
  if (!in) throw std::runtime_error(key + ": cannot open '" + cfg.path(key).string() + "'");
  return potential_from_key_values(KeyValues::read(in), params);
}

/// Box coordinates of a potential, encoding its mixture when it was not decoded from θ.
VectorXd theta_of(const MixturePotential& p, const ParameterBox& box) {
  if (p.is_zero()) throw std::invalid_argument("the zero potential has no box coordinates");
  if (p.theta().size() == box.D()) return p.theta();
  return encode(p.mixture(), box);
}

TheoryInputs theory_from_config(Config& cfg, const Problem& problem, const Target& target) {
  TheoryInputs in;
  if (target.realizable()) {
    const auto bounds = assumption_bounds(*target.potential, problem.params);
    in.Lambda = bounds.Lambda;
    in.M = bounds.M;
  } else {
    in.Lambda = cfg.real("theory.Lambda", 1.0);
    in.M = cfg.real("theory.M", 1.0);
  }
  in.d = problem.d;
  in.D = problem.box.D();
  in.R = problem.box.R;
  in.L = cfg.real("theory.L", 1.0);
  in.b = problem.params.b();
  in.T = problem.params.T();
  in.v = cfg.real("theory.v", 1.0);
  in.validate();
  return in;
}

/// 1D integration window covering both the base marginal and the target.
std::pair<double, double> kl_window(const Problem& problem, const Target& target, double width) {
  const auto base = base_marginal(problem.params, problem.rho0);
  double lo = base.mean()(0) - width * std::sqrt(base.cov()(0, 0));
  double hi = base.mean()(0) + width * std::sqrt(base.cov()(0, 0));
  if (target.gaussian) {
    lo = std::min(lo, target.gaussian->mean()(0) - width * std::sqrt(target.gaussian->cov()(0, 0)));
    hi = std::max(hi, target.gaussian->mean()(0) + width * std::sqrt(target.gaussian->cov()(0, 0)));
  }
  return {lo, hi};
}

BatchLogDensity target_log_density(const Problem& problem, const Target& target, std::size_t J,
                                   std::uint64_t bank_seed) {
  if (target.gaussian) {
    const GaussianDistd g = *target.gaussian;
    return [g](const MatrixXd& ys) {
      VectorXd out(ys.cols());
      for (Eigen::Index i = 0; i < ys.cols(); ++i) out(i) = log_pdf(g, ys.col(i));
      return out;
    };
  }
  const MarginalModel model(problem.params, *target.potential, problem.rho0, J, bank_seed);
  return [model](const MatrixXd& ys) { return log_rho_T_batch(model, ys).log_density; };
}

}  // namespace

Config::Config(KeyValues kv, fs::path base_dir) : kv_(std::move(kv)), base_dir_(std::move(base_dir)) {}

double Config::real(const std::string& key) const { return kv_.get_double(key); }

double Config::real(const std::string& key, double fallback) {
  if (!kv_.has(key)) kv_.set(key, fallback);
  return kv_.get_double(key);
}

long long Config::integer(const std::string& key) const { return kv_.get_int(key); }

long long Config::integer(const std::string& key, long long fallback) {
  if (!kv_.has(key)) kv_.set(key, std::to_string(fallback));
  return kv_.get_int(key);
}

std::string Config::text(const std::string& key) const { return kv_.get(key); }

std::string Config::text(const std::string& key, const std::string& fallback) {
  if (!kv_.has(key)) kv_.set(key, fallback);
  return kv_.get(key);
}

VectorXd Config::vector(const std::string& key, Eigen::Index size) const {
  const VectorXd v = kv_.get_vector(key);
  if (v.size() != size) {
    throw std::invalid_argument(key + ": expected " + std::to_string(size) + " entries, got " +
                                std::to_string(v.size()));
  }
  return v;
}

VectorXd Config::vector(const std::string& key, const VectorXd& fallback) {
  if (!kv_.has(key)) kv_.set(key, fallback);
  return kv_.get_vector(key);
}

MatrixXd Config::matrix(const std::string& key, Eigen::Index rows, Eigen::Index cols, const MatrixXd& fallback) {
  if (!kv_.has(key)) kv_.set(key, format_matrix(fallback));
  return parse_matrix(kv_.get(key), rows, cols);
}

fs::path Config::path(const std::string& key) const {
  const fs::path p = kv_.get(key);
  return p.is_absolute() ? p : base_dir_ / p;
}

Config load_config(const RunOptions& opts) {
  std::ifstream in(opts.config_path);
  if (!in) throw std::runtime_error("cannot open config '" + opts.config_path.string() + "'");
  Config cfg(KeyValues::read(in), opts.config_path.parent_path());
  if (opts.seed) cfg.set("seed", std::to_string(*opts.seed));
  return cfg;
}

Problem problem_from_config(Config& cfg) {
  const int d = static_cast<int>(cfg.integer("d", 1));
  if (d < 1) throw std::invalid_argument("d must be >= 1");
  const auto seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  OUParamsd params(cfg.real("ou.b", 1.0), cfg.vector("ou.m", VectorXd::Zero(d)),
                   cfg.matrix("ou.sigma", d, d, MatrixXd::Identity(d, d)), cfg.real("ou.T"));
  if (params.dim() != d) throw std::invalid_argument("ou.m: expected " + std::to_string(d) + " entries");
  const GaussianDistd rho0 = gaussian_from_config(cfg, "rho0", d);
  ParameterBox box;
  box.K = static_cast<int>(cfg.integer("box.K", 2));
  box.d = d;
  box.R = cfg.real("box.R", 4.0);
  box.w_floor = cfg.real("box.w_floor", 0.05);
  box.eig_floor = cfg.real("box.eig_floor", 0.05);
  box.validate();
  return {d, std::move(params), rho0, box, seed};
}

Target target_from_config(Config& cfg, const Problem& problem) {
  Target target;
  const std::string kind = cfg.text("target.kind");
  if (kind == "gaussian") {
    target.spec = "gaussian";
    target.gaussian = gaussian_from_config(cfg, "target", problem.d);
  } else if (kind == "realizable") {
    if (cfg.has("target.potential")) {
      target.spec = "realizable:" + cfg.text("target.potential");
      target.potential = load_potential(cfg, "target.potential", problem.params);
    } else {
      target.spec = "realizable:inline";
      const int K = static_cast<int>(cfg.integer("target.K"));
      if (K < 1) throw std::invalid_argument("target.K must be >= 1");
      const VectorXd w = cfg.vector("target.weights", K);
      std::vector<MixtureComponent<double>> comps;
      for (int k = 0; k < K; ++k) {
        const std::string idx = std::to_string(k);
        const VectorXd mean = cfg.vector("target.mean." + idx, problem.d);
        const MatrixXd cov = parse_matrix(cfg.text("target.cov." + idx), problem.d, problem.d);
        comps.push_back({w(k), GaussianDistd(mean, cov)});
      }
      target.potential = from_mixture(GaussianMixtured(std::move(comps)), problem.params);
    }
    if (target.potential->is_zero()) target.spec += ":zero";
  } else {
    throw std::invalid_argument("unknown target.kind '" + kind + "' (expected gaussian or realizable)");
  }
  return target;
}

MatrixXd Target::sample(const Problem& problem, Eigen::Index n, std::uint64_t seed) const {
  if (n < 1) throw std::invalid_argument("sample size must be >= 1");
  if (gaussian) {
    Rng rng = make_stream(seed, 0);
    return sbp::sample(*gaussian, rng, n);
  }
  return sample_rho_T(problem.params, *potential, problem.rho0, n, seed);
}

void cmd_generate(Config& cfg, const RunOptions& opts) {
  const Problem problem = problem_from_config(cfg);
  const Target target = target_from_config(cfg, problem);
  const long long n = cfg.integer("generate.n");
  if (n < 1) throw std::invalid_argument("generate.n must be >= 1");
  Dataset data;
  data.seed = stream_seed(problem.seed, kGenerate);
  data.target = target.spec;
  data.samples = target.sample(problem, n, data.seed);
  auto out = open_output(opts, "data.txt", "generate", cfg);
  write_dataset(out, data);
}

void cmd_fit(Config& cfg, const RunOptions& opts) {
  const Problem problem = problem_from_config(cfg);
  const ERMConfig erm = with_seeds(erm_from_config(cfg, problem), stream_seed(problem.seed, kFit));
  const Dataset data = read_dataset_file(cfg.path("fit.data").string());
  if (data.samples.rows() != problem.d) throw std::invalid_argument("fit.data: dimension does not match d");

  const ERMResult result = fit(data.samples, problem.params, problem.rho0, erm);
  MixturePotential fitted = decode(result.theta_hat, problem.box, problem.params);
  fitted.set_bounds(assumption_bounds(fitted, problem.params));

  auto pot = open_output(opts, "potential.txt", "fit", cfg);
  potential_to_key_values(fitted).write(pot);

  auto report = open_output(opts, "fit_report.csv", "fit", cfg);
  CsvWriter csv(report, {"restart", "initial_risk", "final_risk", "best"});
  for (std::size_t r = 0; r < result.restart_risks.size(); ++r) {
    csv.row({std::to_string(r), format_double(result.initial_risks[r]), format_double(result.restart_risks[r]),
             std::to_string(static_cast<int>(r) == result.best_restart)});
  }
  auto trace = open_output(opts, "fit_trace.csv", "fit", cfg);
  CsvWriter tcsv(trace, {"iteration", "risk"});
  for (std::size_t i = 0; i < result.risk_trace.size(); ++i)
    tcsv.row({std::to_string(i), format_double(result.risk_trace[i])});
}

RateStudyReport cmd_rate_study(Config& cfg, const RunOptions& opts) {
  const Problem problem = problem_from_config(cfg);
  const Target target = target_from_config(cfg, problem);
  const ERMConfig erm = erm_from_config(cfg, problem);
  const auto n_grid = integer_list(cfg.vector("rate.n_grid", (VectorXd(5) << 250, 500, 1000, 2000, 4000).finished()));
  const int seeds = static_cast<int>(cfg.integer("rate.seeds", 10));
  const double delta = cfg.real("rate.delta", 0.05);
  const TheoryInputs theory = theory_from_config(cfg, problem, target);
  // d = 1 is scored on a deterministic grid, higher d by Monte Carlo.
  const int kl_grid = static_cast<int>(cfg.integer("rate.kl_grid", 2000));
  const double kl_width = cfg.real("rate.kl_width", 12.0);
  const long long n_eval = cfg.integer("rate.n_eval", 20000);
  const long long J_eval = cfg.integer("rate.J_eval", 20000);
  if (n_grid.empty() || seeds < 1) throw std::invalid_argument("rate study needs a non-empty n grid and seeds >= 1");
  for (long long n : n_grid)
    if (n < 2) throw std::invalid_argument("rate.n_grid entries must be >= 2");

  // Class infimum: zero for a realizable target.
  KlEstimate infimum{0.0, 0.0};
  if (!target.realizable()) {
    ClassInfimumOptions io;
    io.n_synthetic = cfg.integer("infimum.n_synthetic", 100000);
    io.seed = stream_seed(problem.seed, kInfimum);
    io.erm = with_seeds(erm, stream_seed(problem.seed, kInfimum + 1));
    io.J_eval = static_cast<std::size_t>(J_eval);
    io.n_eval = n_eval;
    infimum = class_infimum_kl(problem.params, problem.rho0, *target.gaussian, io);
  }

  auto csv_out = open_output(opts, "rate_study.csv", "rate-study", cfg);
  CsvWriter csv(csv_out, {"n", "seed", "excess_kl", "kl_se", "upsilon_value", "fit_risk"});
  fs::create_directories(opts.out_dir);
  std::ofstream timing(opts.out_dir / "rate_study_timing.txt");
  timing << "# n seed wall_time_seconds\n";

  const auto [lo, hi] = kl_window(problem, target, kl_width);
  const BatchLogDensity log_true =
      problem.d == 1 ? BatchLogDensity{}
                     : target_log_density(problem, target, static_cast<std::size_t>(J_eval),
                                          stream_seed(problem.seed, kDiagnostics));
  auto true_1d = [&](double y) {
    const VectorXd v = VectorXd::Constant(1, y);
    return target.gaussian ? log_pdf(*target.gaussian, v)
                           : log_rho_T_quadrature(problem.params, *target.potential, problem.rho0, v);
  };

  auto run_cell = [&](std::size_t cell) {
    const auto start = std::chrono::steady_clock::now();
    const long long n = n_grid[cell / seeds];
    const int s = static_cast<int>(cell % seeds);
    const std::uint64_t cell_seed = stream_seed(problem.seed, kCells + cell);
    const MatrixXd data = target.sample(problem, n, stream_seed(cell_seed, 0));
    const ERMResult result = fit(data, problem.params, problem.rho0, with_seeds(erm, cell_seed));
    const MixturePotential fitted = decode(result.theta_hat, problem.box, problem.params);
    KlEstimate kl{};
    if (problem.d == 1) {
      auto fitted_1d = [&](double y) {
        return log_rho_T_quadrature(problem.params, fitted, problem.rho0, VectorXd::Constant(1, y));
      };
      kl = kl_1d_grid(true_1d, fitted_1d, lo, hi, kl_grid);
    } else {
      const MarginalModel model(problem.params, fitted, problem.rho0, static_cast<std::size_t>(J_eval),
                                stream_seed(cell_seed, 3));
      const BatchLogDensity log_fit = [model](const MatrixXd& ys) { return log_rho_T_batch(model, ys).log_density; };
      const Sampler sampler = [&](Eigen::Index m, std::uint64_t seed) { return target.sample(problem, m, seed); };
      kl = estimate_kl(stream_seed(cell_seed, 4), n_eval, log_true, log_fit, sampler);
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return RateStudyRow{n,
                        s,
                        kl.kl - infimum.kl,
                        std::hypot(kl.se, infimum.se),
                        upsilon(theory, static_cast<double>(n), delta),
                        result.final_risk,
                        wall};
  };

  const std::size_t cells = n_grid.size() * static_cast<std::size_t>(seeds);
  std::vector<std::optional<RateStudyRow>> done(cells);
  std::size_t next = 0;
  std::mutex mutex;
  std::exception_ptr failure;
  // Rows are flushed in cell order as soon as every earlier cell has finished.
  auto record = [&](std::size_t cell, RateStudyRow row) {
    std::lock_guard lock(mutex);
    done[cell] = row;
    for (; next < cells && done[next]; ++next) {
      const auto& r = *done[next];
      csv.row({std::to_string(r.n), std::to_string(r.seed), format_double(r.excess_kl), format_double(r.kl_se),
               format_double(r.upsilon_value), format_double(r.fit_risk)});
      timing << r.n << ' ' << r.seed << ' ' << r.wall_time << '\n';
    }
    csv_out.flush();
    timing.flush();
  };

#ifdef _OPENMP
  omp_set_num_threads(std::max(1, opts.threads));
#endif
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t cell = 0; cell < cells; ++cell) {
    {
      std::lock_guard lock(mutex);
      if (failure) continue;
    }
    try {
      record(cell, run_cell(cell));
    } catch (...) {
      std::lock_guard lock(mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  RateStudyReport report;
  report.n_grid = n_grid;
  for (const auto& r : done) report.rows.push_back(*r);
  std::vector<double> log_n, log_med;
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    std::vector<double> excess;
    for (int s = 0; s < seeds; ++s) excess.push_back(report.rows[i * seeds + s].excess_kl);
    report.median_excess.push_back(median(excess));
    report.upsilon.push_back(upsilon(theory, static_cast<double>(n_grid[i]), delta));
    log_n.push_back(std::log(static_cast<double>(n_grid[i])));
    log_med.push_back(std::log(report.median_excess.back()));
  }
  report.strictly_decreasing = true;
  for (std::size_t i = 1; i < n_grid.size(); ++i)
    report.strictly_decreasing = report.strictly_decreasing && report.median_excess[i] < report.median_excess[i - 1];
  const bool loggable = std::all_of(report.median_excess.begin(), report.median_excess.end(), [](double v) { return v > 0; });
  const double nan = std::numeric_limits<double>::quiet_NaN();
  report.slope = loggable && n_grid.size() >= 2 ? fit_line(log_n, log_med) : LineFit{nan, nan, nan};

  auto summary = open_output(opts, "rate_summary.csv", "rate-study", cfg);
  CsvWriter scsv(summary, {"n", "median_excess_kl", "upsilon_value"});
  for (std::size_t i = 0; i < n_grid.size(); ++i)
    scsv.row({std::to_string(n_grid[i]), format_double(report.median_excess[i]), format_double(report.upsilon[i])});
  auto slope = open_output(opts, "rate_slope.csv", "rate-study", cfg);
  CsvWriter lcsv(slope, {"slope", "intercept", "slope_se", "slope_lo95", "slope_hi95", "strictly_decreasing"});
  lcsv.row({format_double(report.slope.slope), format_double(report.slope.intercept),
            format_double(report.slope.slope_se), format_double(report.slope.slope - 1.96 * report.slope.slope_se),
            format_double(report.slope.slope + 1.96 * report.slope.slope_se),
            std::to_string(static_cast<int>(report.strictly_decreasing))});
  return report;
}

void cmd_bridge(Config& cfg, const RunOptions& opts) {
  const Problem problem = problem_from_config(cfg);
  const GaussianDistd init = gaussian_from_config(cfg, "bridge.init", problem.d);
  const GaussianDistd target = gaussian_from_config(cfg, "bridge.target", problem.d);
  const auto points = static_cast<std::size_t>(cfg.integer("bridge.points", 100));
  const auto sol = solve(problem.params, init, target);
  const auto res = verify_plan(sol, problem.params, init, target, points, stream_seed(problem.seed, kBridge));

  auto sol_out = open_output(opts, "bridge_solution.txt", "bridge", cfg);
  bridge_to_key_values(sol).write(sol_out);
  auto out = open_output(opts, "bridge_residuals.csv", "bridge", cfg);
  CsvWriter csv(out, {"marginal", "schur_identity", "factorization", "commutation", "upsilon_bounded"});
  csv.row({format_double(res.marginal), format_double(res.schur_identity), format_double(res.factorization),
           format_double(res.commutation), std::to_string(static_cast<int>(upsilon_T_bounded_criterion(sol, problem.params)))});
}

void cmd_simulate(Config& cfg, const RunOptions& opts) {
  const Problem problem = problem_from_config(cfg);
  const std::string process = cfg.text("simulate.process", "controlled");
  const long long n_paths = cfg.integer("simulate.n_paths", 5000);
  const int n_steps = static_cast<int>(cfg.integer("simulate.n_steps", 800));
  const std::uint64_t seed = stream_seed(problem.seed, kSimulate);

  std::optional<MixturePotential> potential;
  if (process == "controlled") {
    const DriftForm form = parse_drift_form(cfg.text("simulate.drift_form", to_string(DriftForm::sigma_scaled)));
    if (cfg.has("simulate.potential")) {
      potential = load_potential(cfg, "simulate.potential", problem.params);
    } else {
      const Target target = target_from_config(cfg, problem);
      if (!target.realizable()) throw std::invalid_argument("simulate: controlled process needs a potential");
      potential = target.potential;
    }
    cfg.set("simulate.drift_form", to_string(form));
  } else if (process != "base") {
    throw std::invalid_argument("unknown simulate.process '" + process + "' (expected controlled or base)");
  }
  const long long n_reference = cfg.integer("simulate.n_reference", 200000);

  const PathEnsemble paths =
      potential ? simulate_controlled(problem.params, *potential, problem.rho0, n_paths, n_steps, seed,
                                      parse_drift_form(cfg.text("simulate.drift_form")))
                : simulate_base(problem.params, problem.rho0, n_paths, n_steps, seed);

  Dataset endpoints{paths.endpoints, seed, process};
  auto ep = open_output(opts, "endpoints.txt", "simulate", cfg);
  write_dataset(ep, endpoints);

  // Reference law of the endpoint: closed form for the base process, exact draws otherwise.
  VectorXd ref_mean, ref_var;
  if (potential) {
    const MatrixXd ref = sample_rho_T(problem.params, *potential, problem.rho0, n_reference, stream_seed(seed, 1));
    ref_mean = ref.rowwise().mean();
    ref_var = (ref.colwise() - ref_mean).rowwise().squaredNorm() / static_cast<double>(ref.cols() - 1);
  } else {
    const auto base = base_marginal(problem.params, problem.rho0);
    ref_mean = base.mean();
    ref_var = base.cov().diagonal();
  }
  const VectorXd mean = paths.endpoints.rowwise().mean();
  const VectorXd var =
      (paths.endpoints.colwise() - mean).rowwise().squaredNorm() / static_cast<double>(paths.endpoints.cols() - 1);
  auto mom = open_output(opts, "simulate_moments.csv", "simulate", cfg);
  CsvWriter mcsv(mom, {"coordinate", "sample_mean", "sample_var", "reference_mean", "reference_var"});
  for (int i = 0; i < problem.d; ++i) {
    mcsv.row({std::to_string(i), format_double(mean(i)), format_double(var(i)), format_double(ref_mean(i)),
              format_double(ref_var(i))});
  }

  if (problem.d == 1) {
    const std::vector<double> ys = values_of(paths.endpoints.row(0).transpose());
    KsResult ks{};
    if (potential) {
      const auto base = base_marginal(problem.params, problem.rho0);
      const double c = base.mean()(0), sd = std::sqrt(base.cov()(0, 0));
      const TabulatedCdf cdf(
          [&](double y) {
            return log_rho_T_quadrature(problem.params, *potential, problem.rho0, VectorXd::Constant(1, y));
          },
          c - 12 * sd, c + 12 * sd, 4000);
      ks = ks_test(ys, cdf);
    } else {
      const double m = ref_mean(0), sd = std::sqrt(ref_var(0));
      ks = ks_test(ys, [&](double y) { return 0.5 * std::erfc(-(y - m) / (sd * std::sqrt(2.0))); });
    }
    auto ks_out = open_output(opts, "simulate_ks.csv", "simulate", cfg);
    CsvWriter kcsv(ks_out, {"statistic", "p_value"});
    kcsv.row({format_double(ks.statistic), format_double(ks.p_value)});
  }
}

void cmd_diagnostics(Config& cfg, const RunOptions& opts) {
  const Problem problem = problem_from_config(cfg);
  const Target target = target_from_config(cfg, problem);
  const TheoryInputs theory = theory_from_config(cfg, problem, target);
  const auto chi2_d = integer_list(cfg.vector("diagnostics.chi2_d", (VectorXd(3) << 1, 4, 16).finished()));
  const std::vector<double> chi2_p = values_of(cfg.vector("diagnostics.chi2_p", (VectorXd(3) << 1, 2, 4).finished()));
  const long long chi2_n = cfg.integer("diagnostics.chi2_n", 100000);
  const auto upsilon_n = integer_list(cfg.vector("diagnostics.upsilon_n", (VectorXd(5) << 250, 500, 1000, 2000, 4000).finished()));
  const double delta = cfg.real("diagnostics.delta", 0.05);
  const double bt_lo = cfg.real("diagnostics.bt_lo", 5.0 + std::log(static_cast<double>(problem.d)));
  const double bt_hi = cfg.real("diagnostics.bt_hi", 20.0);
  const int bt_points = static_cast<int>(cfg.integer("diagnostics.bt_points", 16));
  const std::vector<double> radii = values_of(cfg.vector("diagnostics.radii", (VectorXd(4) << 0, 1, 2, 4).finished()));
  const bool with_fit = cfg.has("diagnostics.fitted");
  int points = 0;
  long long n_mc = 0, J = 0;
  double n_supplied = 0.0;
  if (with_fit) {
    points = static_cast<int>(cfg.integer("diagnostics.line_points", 10));
    n_mc = cfg.integer("diagnostics.n_mc", 20000);
    J = cfg.integer("diagnostics.J", 2000);
    n_supplied = cfg.real("diagnostics.n_supplied", 1000.0);
  }
  const std::uint64_t seed = stream_seed(problem.seed, kDiagnostics);

  auto chi2_out = open_output(opts, "chi2.csv", "diagnostics", cfg);
  CsvWriter chi2(chi2_out, {"d", "p", "n_mc", "lhs", "lhs_se", "rhs", "pass"});
  std::uint64_t index = 0;
  for (long long d : chi2_d) {
    for (double p : chi2_p) {
      const auto r = chi2_moment_check(static_cast<int>(d), p, static_cast<std::size_t>(chi2_n), stream_seed(seed, index++));
      chi2.row({std::to_string(d), format_double(p), std::to_string(chi2_n), format_double(r.lhs),
                format_double(r.lhs_se), format_double(r.rhs), std::to_string(static_cast<int>(r.pass))});
    }
  }

  auto ups_out = open_output(opts, "upsilon.csv", "diagnostics", cfg);
  CsvWriter ups(ups_out, {"n", "delta", "upsilon_value"});
  for (long long n : upsilon_n)
    ups.row({std::to_string(n), format_double(delta), format_double(upsilon(theory, static_cast<double>(n), delta))});

  auto k_out = open_output(opts, "cal_K.csv", "diagnostics", cfg);
  CsvWriter kcsv(k_out, {"bT", "cal_K", "scaled_excess"});
  for (int i = 0; i < bt_points; ++i) {
    const double bt = bt_points == 1 ? bt_lo : bt_lo + (bt_hi - bt_lo) * i / (bt_points - 1);
    const double k = cal_K(problem.d, 1.0, bt);
    kcsv.row({format_double(bt), format_double(k),
              format_double((k - 1.0) / (std::sqrt(static_cast<double>(problem.d)) * std::exp(-bt)))});
  }

  auto a_out = open_output(opts, "cal_A.csv", "diagnostics", cfg);
  CsvWriter acsv(a_out, {"radius", "t", "cal_A"});
  const MatrixXd L = problem.params.sigma_factor();
  for (double r : radii) {
    // Point at whitened distance r from m along the first axis.
    const VectorXd x = problem.params.m() + r * L.col(0);
    for (double frac : {0.25, 0.5, 1.0}) {
      const double t = frac * problem.params.T();
      acsv.row({format_double(r), format_double(t), format_double(cal_A(problem.params, x, t))});
    }
  }

  if (!with_fit) return;
  if (!target.realizable()) throw std::invalid_argument("diagnostics.fitted requires a realizable target");
  const MixturePotential fitted = load_potential(cfg, "diagnostics.fitted", problem.params);

  const VectorXd star = theta_of(*target.potential, problem.box);
  const VectorXd hat = theta_of(fitted, problem.box);
  const MarginalModel truth(problem.params, decode(star, problem.box, problem.params), problem.rho0,
                            static_cast<std::size_t>(J), stream_seed(seed, 100));
  const auto bounds = assumption_bounds(truth.potential(), problem.params);

  auto b_out = open_output(opts, "bernstein.csv", "diagnostics", cfg);
  CsvWriter bcsv(b_out, {"s", "variance", "variance_se", "kl", "kl_se", "ratio"});
  for (int k = 0; k < points; ++k) {
    const double s = static_cast<double>(points - k) / points;
    const auto model = truth.with_potential(decode(VectorXd(star + s * (hat - star)), problem.box, problem.params));
    const auto rep = bernstein_diagnostic(truth, model, n_mc, stream_seed(seed, 101), bounds, n_supplied);
    bcsv.row({format_double(s), format_double(rep.variance), format_double(rep.variance_se), format_double(rep.kl),
              format_double(rep.kl_se), format_double(rep.ratio)});
  }

  const auto orlicz = orlicz_tail_diagnostic(truth, truth.with_potential(decode(hat, problem.box, problem.params)),
                                             n_mc, stream_seed(seed, 102), theory.v);
  auto o_out = open_output(opts, "orlicz.csv", "diagnostics", cfg);
  CsvWriter ocsv(o_out, {"threshold", "exceedance", "exponential_bound"});
  for (const auto& p : orlicz.curve)
    ocsv.row({format_double(p.threshold), format_double(p.exceedance), format_double(p.exponential_bound)});
  auto os_out = open_output(opts, "orlicz_summary.csv", "diagnostics", cfg);
  CsvWriter oscsv(os_out, {"scale", "A", "B", "bound"});
  oscsv.row({format_double(orlicz.scale), format_double(orlicz.A), format_double(orlicz.B), format_double(orlicz.bound)});
}

std::string csv_body(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open '" + file.string() + "'");
  std::string line, body;
  while (std::getline(in, line))
    if (line.empty() || line.front() != '#') body += line + '\n';
  return body;
}

}  // namespace sbp::cli
