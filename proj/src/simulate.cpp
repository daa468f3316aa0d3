#include "sbp/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbp/rng.hpp"

namespace sbp {
namespace {

/// Convolved components of the h-function at one time step, pre-factored.
struct StepTerms {
  double decay;  // e^{−b(T−t)}
  std::vector<double> log_weight;
  std::vector<VectorXd> mean;
  std::vector<MatrixXd> precision;
};

void validate_sizes(Eigen::Index n_paths, int n_steps) {
  if (n_paths < 1) throw std::invalid_argument("simulate: n_paths must be >= 1");
  if (n_steps < 1) throw std::invalid_argument("simulate: n_steps must be >= 1");
}

std::vector<StepTerms> precompute_steps(const OUParamsd& params, const MixturePotential& potential,
                                        int n_steps, double dt) {
  std::vector<StepTerms> steps;
  steps.reserve(n_steps);
  const auto& mix = potential.mixture();
  const int d = params.dim();
  for (int i = 0; i < n_steps; ++i) {
    const double remaining = std::max(params.T() - i * dt, 0.5 * dt);
    const auto comps = convolved_components(params, mix, Elapsed(remaining));
    StepTerms s{std::exp(-params.b() * remaining), {}, {}, {}};
    for (const auto& c : comps) {
      s.log_weight.push_back(std::log(c.weight) - 0.5 * c.dist.log_det());
      s.mean.push_back(c.dist.mean());
      s.precision.push_back(c.dist.llt().solve(MatrixXd::Identity(d, d)));
    }
    steps.push_back(std::move(s));
  }
  return steps;
}

/// ∇ log 𝒯_{T−t}e^ψ at x from the precomputed step terms.
VectorXd h_gradient(const OUParamsd& params, const StepTerms& s, const VectorXd& x) {
  const VectorXd z = (1.0 - s.decay) * params.m() + s.decay * x;
  const std::size_t K = s.mean.size();
  std::vector<VectorXd> pulls(K);
  std::vector<double> logw(K);
  for (std::size_t k = 0; k < K; ++k) {
    pulls[k] = s.precision[k] * (s.mean[k] - z);
    logw[k] = s.log_weight[k] - 0.5 * (s.mean[k] - z).dot(pulls[k]);
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  double total = 0.0;
  VectorXd grad = VectorXd::Zero(x.size());
  for (std::size_t k = 0; k < K; ++k) {
    const double w = std::exp(logw[k] - top);
    total += w;
    grad += w * pulls[k];
  }
  return (s.decay / total) * grad;
}

template <typename ExtraDrift>
PathEnsemble euler_maruyama(const OUParamsd& params, const GaussianDistd& rho0, Eigen::Index n_paths,
                            int n_steps, std::uint64_t seed, ExtraDrift&& extra) {
  validate_sizes(n_paths, n_steps);
  require_dim(rho0.dim(), params.dim(), "simulate rho0");
  const int d = params.dim();
  const double dt = params.T() / n_steps;
  const double sqrt_dt = std::sqrt(dt);
  const MatrixXd noise_factor = params.sigma_factor();
  const MatrixXd start_factor = rho0.llt().matrixL();
  PathEnsemble out{MatrixXd(d, n_paths), n_steps, dt, seed};
  int failed_step = std::numeric_limits<int>::max();

#pragma omp parallel for schedule(static) reduction(min : failed_step)
  for (Eigen::Index path = 0; path < n_paths; ++path) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(path));
    std::normal_distribution<double> normal;
    VectorXd z(d);
    for (int r = 0; r < d; ++r) z(r) = normal(rng);
    VectorXd x = rho0.mean() + start_factor * z;
    for (int step = 0; step < n_steps; ++step) {
      VectorXd drift = params.b() * (params.m() - x) + extra(step, x);
      for (int r = 0; r < d; ++r) z(r) = normal(rng);
      x += dt * drift + sqrt_dt * (noise_factor * z);
      if (!x.allFinite()) {
        failed_step = std::min(failed_step, step);
        break;
      }
    }
    out.endpoints.col(path) = x;
  }
  if (failed_step != std::numeric_limits<int>::max()) {
    throw std::runtime_error("simulate: non-finite state at step " + std::to_string(failed_step) +
                             " of " + std::to_string(n_steps));
  }
  return out;
}

}  // namespace

DriftForm parse_drift_form(const std::string& name) {
  if (name == "sigma_scaled") return DriftForm::sigma_scaled;
  if (name == "plain") return DriftForm::plain;
  throw std::invalid_argument("unknown drift_form '" + name + "' (sigma_scaled|plain)");
}

std::string to_string(DriftForm form) {
  return form == DriftForm::sigma_scaled ? "sigma_scaled" : "plain";
}

PathEnsemble simulate_base(const OUParamsd& params, const GaussianDistd& rho0, Eigen::Index n_paths,
                           int n_steps, std::uint64_t seed) {
  const VectorXd zero = VectorXd::Zero(params.dim());
  return euler_maruyama(params, rho0, n_paths, n_steps, seed,
                        [&](int, const VectorXd&) -> const VectorXd& { return zero; });
}

PathEnsemble simulate_controlled(const OUParamsd& params, const MixturePotential& potential,
                                 const GaussianDistd& rho0, Eigen::Index n_paths, int n_steps,
                                 std::uint64_t seed, DriftForm form) {
  require_dim(potential.dim(), params.dim(), "simulate_controlled potential");
  if (potential.is_zero()) return simulate_base(params, rho0, n_paths, n_steps, seed);
  validate_sizes(n_paths, n_steps);
  const auto steps = precompute_steps(params, potential, n_steps, params.T() / n_steps);
  const MatrixXd& sigma = params.sigma();
  return euler_maruyama(params, rho0, n_paths, n_steps, seed, [&](int step, const VectorXd& x) {
    VectorXd g = h_gradient(params, steps[step], x);
    if (form == DriftForm::sigma_scaled) return VectorXd(sigma * g);
    return g;
  });
}

}  // namespace sbp
