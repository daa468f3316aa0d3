#pragma once

#include <cstdint>
#include <vector>

#include "sbp/erm.hpp"
#include "sbp/marginal.hpp"
#include "sbp/ou.hpp"
#include "sbp/potential.hpp"

namespace sbp {

/// Constants entering the excess-risk bound.
struct TheoryInputs {
  double Lambda = 0.0;
  double M = 0.0;
  int d = 1;
  int D = 1;
  double R = 1.0;
  double L = 1.0;
  double b = 1.0;
  double T = 1.0;
  /// Sub-Gaussian variance proxy v (not squared).
  double v = 1.0;

  void validate() const;
};

/// (Λd + M + d)(d + log(RLn/δ) + (M ∨ log Λ)√d e^{−bT})·D log n / n.
/// For Λ ≤ 0 the logarithm is treated as −∞.
double upsilon(const TheoryInputs& in, double n, double delta);

/// (1 − e^{−2bt})^{−5e²√d} · exp(2e²√d · arcsin e^{−bt}).
double cal_K(int d, double b, double t);

/// max over a grid of bT ∈ [lo, hi] of (𝒦 − 1)/(√d e^{−bT}).
double cal_K_excess_constant(int d, double bt_lo, double bt_hi, int points);

/// (b e²/√d ‖Σ^{-1/2}(x − m)‖² + 4e²√d)·arcsin(e^{−bt}) − 10e²√d·log(1 − e^{−2bt}).
double cal_A(const OUParamsd& params, const VectorXd& x, double t);

/// B e^M + 2^{α−1}A e^M ‖Σ^{-1/2}(x − m)‖^α + 4^{α−1}A e^M (2b)^{−α/2}((10α√d)^α + d^α).
double cal_G(const VectorXd& x, const OUParamsd& params, double A, double B, double M, double alpha);

struct Chi2Check {
  double lhs;
  double lhs_se;
  double rhs;
  bool pass;
};

/// Monte-Carlo (E|‖ξ‖² − d|^p)^{1/p} for ξ ~ 𝒩(0, I_d) against 10p√d; passes
/// when lhs + 3·SE ≤ rhs. The SE is propagated by the delta method.
Chi2Check chi2_moment_check(int d, double p, std::size_t n_mc, std::uint64_t seed);

struct BernsteinReport {
  double variance;
  double variance_se;
  double kl;
  double kl_se;
  /// variance / ((Λd + M + d)·log n·(KL + 1/n)).
  double ratio;
};

/// Summary of log(ρ*/ρ) values drawn under ρ*.
BernsteinReport bernstein_from_log_ratios(const VectorXd& log_ratio, const AssumptionBounds& bounds,
                                          int d, double n_supplied);

/// Log ratios of `truth` to `fitted` at exact draws from `truth`.
VectorXd sample_log_ratios(const MarginalModel& truth, const MarginalModel& fitted, Eigen::Index n_mc,
                           std::uint64_t seed);

BernsteinReport bernstein_diagnostic(const MarginalModel& truth, const MarginalModel& fitted,
                                     Eigen::Index n_mc, std::uint64_t seed,
                                     const AssumptionBounds& bounds, double n_supplied);

struct SquaredLogCheck {
  double lhs;
  double rhs;
  /// Standard error of the per-sample difference lhs − rhs.
  double se;
  bool pass;
};

/// E_p log²(p/q) ≤ 2 log(1/ω) KL(p, q) + 2 E_p log²(((1 − ω)q + ωp)/q), checked by
/// Monte Carlo; passes when lhs ≤ rhs + 3·SE.
SquaredLogCheck squared_log_inequality_check(const BatchLogDensity& log_p, const Sampler& p_sampler,
                                             const BatchLogDensity& log_q, double omega,
                                             Eigen::Index n_mc, std::uint64_t seed);

struct TailPoint {
  double threshold;
  double exceedance;
  /// 2 exp(−threshold/scale), the tail implied by the fitted ψ₁ scale.
  double exponential_bound;
};

struct OrliczReport {
  /// Empirical inf{u : mean exp(|ξ|/u) ≤ 2}.
  double scale;
  /// Smallest envelope log(p/q)(x) ≤ A‖x − x̄‖² + B over the samples.
  double A;
  double B;
  /// 1 ∨ (2B + 2(d + 2)A v²).
  double bound;
  std::vector<TailPoint> curve;
};

/// ψ₁ scale and exceedance curve of ξ = log ratio, with envelope points `ys` (d × n).
OrliczReport orlicz_from_samples(const VectorXd& log_ratio, const MatrixXd& ys, double v);

OrliczReport orlicz_tail_diagnostic(const MarginalModel& truth, const MarginalModel& fitted,
                                    Eigen::Index n_mc, std::uint64_t seed, double v);

/// Law used for 𝒯_∞ in diagnostics: the stationary 𝒩(m, Σ/(2b)) or 𝒩(m, Σ).
enum class InfinityLaw { stationary, unit_scale };

/// 𝒯_∞|ψ_1 − ψ_2|: adaptive quadrature for d = 1, Gauss–Hermite for d ≤ 3.
double stationary_abs_gap(const MixturePotential& a, const MixturePotential& b,
                          const OUParamsd& params, InfinityLaw law = InfinityLaw::stationary);

}  // namespace sbp
