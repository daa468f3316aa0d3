#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "sbp/gauss.hpp"
#include "sbp/io.hpp"
#include "sbp/ou.hpp"
#include "sbp/types.hpp"

namespace sbp {

/// Bounded parameter box Θ ⊆ [−R, R]^D for K-component mixture potentials.
///
/// Layout of θ: K−1 weight logits, then the K means (d each), then the K
/// lower-triangular covariance factors (d(d+1)/2 each, row-major).
struct ParameterBox {
  int K = 1;
  int d = 1;
  double R = 4.0;
  double w_floor = 0.05;
  double eig_floor = 0.05;

  int D() const { return K - 1 + K * d + K * d * (d + 1) / 2; }
  int mean_offset(int k) const { return K - 1 + k * d; }
  int factor_offset(int k) const { return K - 1 + K * d + k * d * (d + 1) / 2; }
  void validate() const;
  bool contains(const VectorXd& theta) const;
};

struct NormalizeMethod {
  enum class Kind { quadrature, monte_carlo };
  Kind kind = Kind::quadrature;
  std::size_t samples = 100000;
  std::uint64_t seed = 0;

  static NormalizeMethod quadrature() { return {}; }
  static NormalizeMethod monte_carlo(std::size_t n, std::uint64_t seed) {
    return {Kind::monte_carlo, n, seed};
  }
  /// Quadrature where available (d ≤ 3), fixed-seed Monte Carlo otherwise.
  static NormalizeMethod automatic(int d);
};

struct NormalizerEstimate {
  double value;
  double std_error;
};

/// Witnesses of −Λ‖Σ^{-1/2}(x−m)‖² − M ≤ ψ(x) ≤ M.
struct AssumptionBounds {
  double Lambda;
  double M;
};

/// Log-potential ψ(x) = log Σ_k α_k φ_{m_k,Σ_k}(x) − C with 𝒯_∞ψ = 0, or the
/// distinguished ψ ≡ 0.
class MixturePotential {
 public:
  static MixturePotential zero(int d);
  MixturePotential(GaussianMixtured mixture, double C, VectorXd theta = {},
                   std::optional<ParameterBox> box = std::nullopt);

  bool is_zero() const { return !mixture_.has_value(); }
  int dim() const { return dim_; }
  const GaussianMixtured& mixture() const;
  double C() const { return C_; }
  const VectorXd& theta() const { return theta_; }
  const std::optional<ParameterBox>& box() const { return box_; }

  const std::optional<AssumptionBounds>& bounds() const { return bounds_; }
  void set_bounds(AssumptionBounds b) { bounds_ = b; }

 private:
  explicit MixturePotential(int d) : dim_(d) {}

  int dim_;
  std::optional<GaussianMixtured> mixture_;
  double C_ = 0.0;
  VectorXd theta_;
  std::optional<ParameterBox> box_;
  std::optional<AssumptionBounds> bounds_;
};

/// C = E_{η ~ 𝒩(m, Σ/(2b))} log Σ_k α_k φ_{m_k,Σ_k}(η).
NormalizerEstimate normalize(const GaussianMixtured& mixture, const OUParamsd& params,
                             const NormalizeMethod& method);

/// Mixture encoded by θ, without the normalizing constant.
GaussianMixtured decode_mixture(const VectorXd& theta, const ParameterBox& box);

MixturePotential decode(const VectorXd& theta, const ParameterBox& box, const OUParamsd& params);
MixturePotential decode(const VectorXd& theta, const ParameterBox& box, const OUParamsd& params,
                        const NormalizeMethod& method);

/// Inverse of decode_mixture for in-range mixtures; throws otherwise.
VectorXd encode(const GaussianMixtured& mixture, const ParameterBox& box);

/// Potential from an arbitrary mixture, normalized under `params`.
MixturePotential from_mixture(const GaussianMixtured& mixture, const OUParamsd& params);

double eval_psi(const MixturePotential& p, const VectorXd& x);

AssumptionBounds assumption_bounds(const MixturePotential& p, const OUParamsd& params);

/// max_x |ψ_{θ1}(x) − ψ_{θ2}(x)| / ((1 + ‖x‖²)‖θ1 − θ2‖_∞) over random probes.
double lipschitz_probe(const VectorXd& theta1, const VectorXd& theta2, const ParameterBox& box,
                       const OUParamsd& params, std::size_t probes, std::uint64_t seed);

/// Probe points used by lipschitz_probe: half stationary draws, half a
/// heavy-tailed scale mixture of the stationary law.
MatrixXd lipschitz_probe_points(const OUParamsd& params, std::size_t probes, std::uint64_t seed);

/// θ-gradients of log Σ_k α_k 𝒩(z; m_k, Σ_k + S) through the box decoding.
class MixtureThetaGradient {
 public:
  MixtureThetaGradient(const VectorXd& theta, const ParameterBox& box, const MatrixXd& added_cov);

  double value(const VectorXd& z) const;
  /// Writes the D-vector gradient into `grad` and returns the value.
  double value_and_grad(const VectorXd& z, Eigen::Ref<VectorXd> grad) const;

 private:
  struct Component {
    double log_weight;
    VectorXd mean;
    MatrixXd factor;       // L_k with Σ_k = L_k L_kᵀ
    MatrixXd cov_inverse;  // (Σ_k + S)^{-1}
    Eigen::LLT<MatrixXd> llt;
    double log_norm;       // −d/2 log 2π − 1/2 logdet(Σ_k + S)
  };

  ParameterBox box_;
  VectorXd softmax_;
  std::vector<Component> components_;
};

/// (C, ∇_θ C) using the same rule as decode.
std::pair<double, VectorXd> normalizer_gradient(const VectorXd& theta, const ParameterBox& box,
                                                const OUParamsd& params);

/// (ψ_θ(x), ∇_θ ψ_θ(x)).
std::pair<double, VectorXd> psi_gradient(const VectorXd& theta, const ParameterBox& box,
                                         const OUParamsd& params, const VectorXd& x);

KeyValues potential_to_key_values(const MixturePotential& p);
MixturePotential potential_from_key_values(const KeyValues& kv, const OUParamsd& params);

}  // namespace sbp
