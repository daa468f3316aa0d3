#pragma once

#include <cstdint>

#include "sbp/gauss.hpp"
#include "sbp/ou.hpp"
#include "sbp/potential.hpp"

namespace sbp {

/// How the h-transform enters the controlled drift: Σ∇log h or the bare ∇log h.
/// The two coincide for Σ = I.
enum class DriftForm { sigma_scaled, plain };

DriftForm parse_drift_form(const std::string& name);
std::string to_string(DriftForm form);

struct PathEnsemble {
  MatrixXd endpoints;  // d × n_paths
  int n_steps = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
};

/// Euler–Maruyama for the reference process from X_0 ~ ρ_0 with dt = T/n_steps.
/// Path i uses its own stream (seed, i), so the ensemble does not depend on threading.
PathEnsemble simulate_base(const OUParamsd& params, const GaussianDistd& rho0, Eigen::Index n_paths,
                           int n_steps, std::uint64_t seed);

/// Euler–Maruyama for the h-transformed process with h = 𝒯_{T−t}e^ψ. Near the
/// terminal time the gradient is taken at max(T − t, dt/2).
/// Throws std::runtime_error naming the step when the state stops being finite.
PathEnsemble simulate_controlled(const OUParamsd& params, const MixturePotential& potential,
                                 const GaussianDistd& rho0, Eigen::Index n_paths, int n_steps,
                                 std::uint64_t seed, DriftForm form = DriftForm::sigma_scaled);

}  // namespace sbp
