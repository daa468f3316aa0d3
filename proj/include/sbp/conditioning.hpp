#pragma once

#include <cmath>

#include "sbp/gauss.hpp"
#include "sbp/ou.hpp"

namespace sbp {

template <typename Scalar>
struct EndpointConditioning {
  /// log φ(y), φ the density of 𝒩(m_T(μ), Σ_T + e^{−2bT}Ω).
  Scalar log_phi;
  /// Law of the start point given the endpoint y.
  GaussianDist<Scalar> posterior;
};

/// Gaussian prior 𝒩(μ, Ω) on the start point, observed through the horizon-T
/// transition kernel at y:
///   ∫ f(x) 𝗊(y|x) ρ_{μ,Ω}(x) dx = φ(y)·E f(ξ),  ξ ~ 𝒩(μ̆, Ω̆).
template <typename Scalar, typename Derived>
EndpointConditioning<Scalar> condition_endpoint(const OUParams<Scalar>& p,
                                                const GaussianDist<Scalar>& prior,
                                                const Eigen::MatrixBase<Derived>& y) {
  require_dim(prior.dim(), p.dim(), "condition_endpoint prior");
  require_dim(y.size(), p.dim(), "condition_endpoint y");
  using std::exp;
  const Scalar horizon = p.T();
  const Scalar decay = exp(-p.b() * horizon);
  const Matrix<Scalar> sigma_t = transition_cov_factor(p, horizon) * p.sigma();
  const Matrix<Scalar> omega = prior.cov();

  Matrix<Scalar> marginal_cov = symmetrized(Matrix<Scalar>(sigma_t + decay * decay * omega));
  const auto marginal_llt = checked_llt<Scalar>(marginal_cov, "condition_endpoint marginal");
  const Vector<Scalar> center = transition_mean(p, prior.mean(), horizon);
  GaussianDist<Scalar> marginal(center, marginal_cov);

  const Vector<Scalar> innovation = y - center;
  Vector<Scalar> post_mean = prior.mean() + decay * (omega * marginal_llt.solve(innovation));

  const int d = p.dim();
  const Matrix<Scalar> id = Matrix<Scalar>::Identity(d, d);
  const Matrix<Scalar> omega_inv = prior.llt().solve(id);
  const Matrix<Scalar> sigma_t_inv = checked_llt<Scalar>(sigma_t, "condition_endpoint Sigma_T").solve(id);
  const Matrix<Scalar> precision = symmetrized(Matrix<Scalar>(omega_inv + decay * decay * sigma_t_inv));
  Matrix<Scalar> post_cov = symmetrized(
      Matrix<Scalar>(checked_llt<Scalar>(precision, "condition_endpoint precision").solve(id)));

  return {log_pdf(marginal, y), GaussianDist<Scalar>(std::move(post_mean), std::move(post_cov))};
}

}  // namespace sbp
