#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sbp/marginal.hpp"
#include "sbp/optimize.hpp"
#include "sbp/potential.hpp"

namespace sbp {

enum class OptimizerKind { quasi_newton_box, adaptive_first_order };

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

struct ERMConfig {
  ParameterBox box;
  int restarts = 3;
  int max_iters = 200;
  double grad_tol = 1e-6;
  std::uint64_t bank_seed = 1;
  std::uint64_t opt_seed = 2;
  OptimizerKind optimizer = OptimizerKind::quasi_newton_box;
  std::size_t J_fit = 20000;

  void validate() const;
};

struct ERMResult {
  VectorXd theta_hat;
  /// Accepted risks of the winning restart.
  std::vector<double> risk_trace;
  double final_risk;
  /// Final risk per restart; +inf for a restart whose start was not finite.
  std::vector<double> restart_risks;
  std::vector<double> initial_risks;
  std::vector<std::vector<double>> restart_traces;
  double achieved_grad_norm;
  int best_restart;
};

/// −(1/n) Σ_i log ρ_T^ψ(Y_i), data one sample per column.
double empirical_risk(const MarginalModel& model, const MatrixXd& data);

/// Empirical risk as a function of θ with a frozen bank. The normalizing
/// constant cancels from log ρ_T^ψ, so it is never evaluated here.
class RiskObjective {
 public:
  RiskObjective(OUParamsd params, ParameterBox box, std::shared_ptr<const TransitionBank> bank,
                MatrixXd data);

  double value(const VectorXd& theta) const;
  double value_and_grad(const VectorXd& theta, VectorXd& grad) const;

 private:
  double evaluate(const VectorXd& theta, VectorXd* grad) const;
  const MatrixXd& kernel_block(Eigen::Index start, Eigen::Index len, MatrixXd& scratch) const;

  OUParamsd params_;
  ParameterBox box_;
  std::shared_ptr<const TransitionBank> bank_;
  MatrixXd data_;
  MatrixXd sigma_T_;
  /// log 𝗊(Y_i | x_j), kept when small enough.
  MatrixXd kernel_;
};

/// Single-Gaussian guess obtained by dividing the data's Gaussian fit by the
/// base-process marginal, then split into K components along the principal axis.
VectorXd moment_matched_start(const MatrixXd& data, const OUParamsd& params,
                              const GaussianDistd& rho0, const ParameterBox& box);

/// Multi-restart box-constrained empirical risk minimization.
ERMResult fit(const MatrixXd& data, const OUParamsd& params, const GaussianDistd& rho0,
              const ERMConfig& config);

struct KlEstimate {
  double kl;
  double se;
};

/// Log-density evaluated at the columns of its argument.
using BatchLogDensity = std::function<VectorXd(const MatrixXd&)>;
/// n draws (one per column) from a seed.
using Sampler = std::function<MatrixXd(Eigen::Index, std::uint64_t)>;

/// Monte-Carlo KL(p, q) = E_p[log p − log q].
KlEstimate estimate_kl(std::uint64_t sampler_seed, Eigen::Index n_eval, const BatchLogDensity& log_p,
                       const BatchLogDensity& log_q, const Sampler& p_sampler);

/// Deterministic 1D KL by composite Simpson on [lo, hi] with n intervals;
/// `se` is the difference from the half-resolution rule.
KlEstimate kl_1d_grid(const std::function<double(double)>& log_p,
                      const std::function<double(double)>& log_q, double lo, double hi, int n);

}  // namespace sbp
