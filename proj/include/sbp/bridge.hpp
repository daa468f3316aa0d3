#pragma once

#include <cstdint>

#include "sbp/erm.hpp"
#include "sbp/gauss.hpp"
#include "sbp/io.hpp"
#include "sbp/ou.hpp"
#include "sbp/potential.hpp"

namespace sbp {

/// −½ zᵀQz + lᵀz + c.
struct QuadraticForm {
  MatrixXd Q;
  VectorXd l;
  double c = 0.0;

  double operator()(const VectorXd& z) const { return -0.5 * z.dot(Q * z) + l.dot(z) + c; }
  VectorXd gradient(const VectorXd& z) const { return l - Q * z; }
};

/// Closed-form static Schrödinger bridge between Gaussian marginals under the
/// OU reference, in the whitened coordinates z = Σ^{-1/2}x.
struct GaussianBridgeSolution {
  MatrixXd sigma_inv_sqrt;  // Σ^{-1/2}
  MatrixXd S0, ST;
  double sigma2;
  MatrixXd D_sigma, A_sigma;
  MatrixXd S0_breve, ST_breve;
  /// Joint law of (z_0, z_T).
  GaussianDistd plan = GaussianDistd::standard(1);
  /// log ϱ_0 and log ϱ_T with the additive constants set to zero.
  QuadraticForm q0_quad, qT_quad;
};

GaussianBridgeSolution solve(const OUParamsd& params, const GaussianDistd& init,
                             const GaussianDistd& target);

/// log density of the whitened reference transition 𝖯(z_T | z_0) over [0, T].
double scaled_transition_log_pdf(const OUParamsd& params, const GaussianBridgeSolution& sol,
                                 const VectorXd& z0, const VectorXd& zT);

struct BridgeResiduals {
  /// Max entrywise gap of the plan's mean and covariance blocks to the whitened marginals.
  double marginal;
  /// ‖S̆_0 S_T − σ²A_σ‖_F / ‖σ²A_σ‖_F.
  double schur_identity;
  /// Max deviation from its mean of log plan − (log 𝖯 + log ϱ_0 + log ϱ_T) over the points.
  double factorization;
  /// ‖D_σ M − M D_σ‖_F / ‖M‖_F with M = S_0^{1/2} S_T S_0^{1/2}.
  double commutation;
};

BridgeResiduals verify_plan(const GaussianBridgeSolution& sol, const OUParamsd& params,
                            const GaussianDistd& init, const GaussianDistd& target,
                            std::size_t points = 100, std::uint64_t seed = 7);

enum class UpsilonNormalization { raw, stationary };

/// log υ_T(x) = log ϱ_T(Σ^{-1/2}x) with zero constant (raw), or shifted so that its
/// expectation under the stationary law vanishes (stationary).
double log_upsilon_T(const GaussianBridgeSolution& sol, const OUParamsd& params, const VectorXd& x,
                     UpsilonNormalization norm = UpsilonNormalization::raw);

/// Eigenvalue test for S_T ⪯ (1 − e^{−2bT})/(2b)·I, under which υ_T is bounded.
bool upsilon_T_bounded_criterion(const GaussianBridgeSolution& sol, const OUParamsd& params);

KeyValues bridge_to_key_values(const GaussianBridgeSolution& sol);

struct ClassInfimumOptions {
  Eigen::Index n_synthetic = 100000;
  std::uint64_t seed = 11;
  ERMConfig erm;
  /// Bank size for Monte-Carlo scoring when d = 2.
  std::size_t J_eval = 100000;
  Eigen::Index n_eval = 20000;
};

/// Upper-bound proxy for inf_ψ KL(target, ρ_T^ψ): the better of the zero potential
/// (closed form) and a large-sample fit scored by quadrature (d = 1) or Monte Carlo (d = 2).
KlEstimate class_infimum_kl(const OUParamsd& params, const GaussianDistd& rho0,
                            const GaussianDistd& target, const ClassInfimumOptions& options);

/// 𝒩(m_T(μ_0), Σ_T + e^{−2bT}Ω_0): endpoint law of the reference process from 𝒩(μ_0, Ω_0).
GaussianDistd base_marginal(const OUParamsd& params, const GaussianDistd& rho0);

}  // namespace sbp
