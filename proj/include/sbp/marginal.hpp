#pragma once

#include <cstdint>
#include <memory>

#include "sbp/gauss.hpp"
#include "sbp/ou.hpp"
#include "sbp/potential.hpp"

namespace sbp {

/// Horizon-T transition kernel from a frozen set of start points x_j:
/// evaluates log 𝗊(y | x_j) for all j at once.
class TransitionBank {
 public:
  TransitionBank(const OUParamsd& params, MatrixXd starts);

  Eigen::Index size() const { return starts_.cols(); }
  const MatrixXd& starts() const { return starts_; }
  /// m_T(x_j), one column per start point.
  const MatrixXd& pushed_means() const { return pushed_; }

  /// Row i, column j holds log 𝗊(y_i | x_j); `ys` holds one y per column.
  MatrixXd log_kernel(const MatrixXd& ys) const;
  /// Transposed layout: row j, column i holds log 𝗊(y_i | x_j).
  MatrixXd log_kernel_by_start(const MatrixXd& ys) const;

 private:
  MatrixXd starts_;
  MatrixXd pushed_;
  MatrixXd whitened_;  // L_T^{-1} m_T(x_j)
  VectorXd whitened_sq_;
  Eigen::LLT<MatrixXd> llt_;
  double log_norm_;
};

/// J Latin-hypercube draws from ρ_0 on stream (seed, 0): each point is marginally
/// ρ_0-distributed and every standardized coordinate is stratified. Requires J ≥ 100.
std::shared_ptr<const TransitionBank> make_transition_bank(const OUParamsd& params,
                                                           const GaussianDistd& rho0, std::size_t J,
                                                           std::uint64_t seed);

/// ρ_T^ψ evaluator: reference process, potential and a frozen Monte-Carlo bank of
/// ρ_0 draws. The bank is regenerated bit-exactly from (J, bank_seed).
class MarginalModel {
 public:
  MarginalModel(OUParamsd params, MixturePotential potential, GaussianDistd rho0, std::size_t J,
                std::uint64_t bank_seed);
  /// Reuses an existing bank; `bank_seed` is recorded for provenance only.
  MarginalModel(OUParamsd params, MixturePotential potential, GaussianDistd rho0,
                std::shared_ptr<const TransitionBank> bank, std::uint64_t bank_seed);

  /// Same bank and ρ_0, different potential.
  MarginalModel with_potential(MixturePotential potential) const;

  const OUParamsd& params() const { return params_; }
  const MixturePotential& potential() const { return potential_; }
  const GaussianDistd& rho0() const { return rho0_; }
  std::size_t J() const { return static_cast<std::size_t>(bank_->size()); }
  std::uint64_t bank_seed() const { return bank_seed_; }
  const TransitionBank& bank() const { return *bank_; }
  const std::shared_ptr<const TransitionBank>& shared_bank() const { return bank_; }
  /// log h_ψ(x_j, 0) for every bank point.
  const VectorXd& bank_log_h() const { return bank_log_h_; }

 private:
  OUParamsd params_;
  MixturePotential potential_;
  GaussianDistd rho0_;
  std::shared_ptr<const TransitionBank> bank_;
  std::uint64_t bank_seed_;
  VectorXd bank_log_h_;
};

/// log h_ψ(x, t) = log 𝒯_{T−t} e^ψ(x) for 0 ≤ t ≤ T.
double log_h(const OUParamsd& params, const MixturePotential& potential, const VectorXd& x, double t);
double log_h(const MarginalModel& model, const VectorXd& x, double t);

double log_rho_T(const MarginalModel& model, const VectorXd& y);

struct DensityBatch {
  VectorXd log_density;
  /// Jackknife standard error over the bank, per point.
  VectorXd std_error;
};

/// Batch evaluation over the columns of `ys`.
DensityBatch log_rho_T_batch(const MarginalModel& model, const MatrixXd& ys);

/// Independent adaptive-quadrature evaluation of the same integral (d ≤ 2).
double log_rho_T_quadrature(const OUParamsd& params, const MixturePotential& potential,
                            const GaussianDistd& rho0, const VectorXd& y);

/// ∇_θ log ρ_T^ψ(y) through the box decoding; requires a decoded potential.
VectorXd grad_theta_log_rho_T(const MarginalModel& model, const VectorXd& y);

/// Exact draws from ρ_T^ψ: x ~ ρ_0, then y from the h-transformed transition,
/// which is itself a Gaussian mixture for mixture potentials.
MatrixXd sample_rho_T(const OUParamsd& params, const MixturePotential& potential,
                      const GaussianDistd& rho0, Eigen::Index n, std::uint64_t seed);

}  // namespace sbp
