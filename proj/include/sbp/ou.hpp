#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "sbp/gauss.hpp"
#include "sbp/linalg.hpp"
#include "sbp/types.hpp"

namespace sbp {

/// Reference process dX = b(m − X)dt + Σ^{1/2}dW on [0, T].
template <typename Scalar>
class OUParams {
 public:
  OUParams(Scalar b, Vector<Scalar> m, Matrix<Scalar> sigma, Scalar horizon)
      : b_(b), m_(std::move(m)), sigma_(std::move(sigma)), horizon_(horizon) {
    if (!(b_ > 0) || !std::isfinite(static_cast<double>(b_)))
      throw std::invalid_argument("OUParams: b must be > 0");
    if (!(horizon_ > 0) || !std::isfinite(static_cast<double>(horizon_)))
      throw std::invalid_argument("OUParams: T must be > 0");
    if (m_.size() < 1 || m_.size() > kMaxDimension)
      throw std::invalid_argument("OUParams: dimension out of range");
    require_dim(sigma_.rows(), m_.size(), "OUParams sigma rows");
    require_dim(sigma_.cols(), m_.size(), "OUParams sigma cols");
    if (!is_symmetric(sigma_)) throw std::invalid_argument("OUParams: sigma not symmetric");
    llt_ = checked_llt<Scalar>(sigma_, "OUParams sigma");
  }

  int dim() const { return static_cast<int>(m_.size()); }
  Scalar b() const { return b_; }
  const Vector<Scalar>& m() const { return m_; }
  const Matrix<Scalar>& sigma() const { return sigma_; }
  Scalar T() const { return horizon_; }
  /// Lower Cholesky factor of Σ, used as the diffusion coefficient.
  Matrix<Scalar> sigma_factor() const { return llt_.matrixL(); }
  const Eigen::LLT<Matrix<Scalar>>& sigma_llt() const { return llt_; }

  /// bT ≥ (5 + log d) ∨ log(160·b·(v² ∨ 1)·‖Σ^{-1}‖).
  bool large_t_regime(Scalar v) const {
    using std::log;
    const Matrix<Scalar> sigma_inv = llt_.solve(Matrix<Scalar>::Identity(dim(), dim()));
    const Scalar need = std::max<Scalar>(Scalar(5) + log(Scalar(dim())),
                                         log(Scalar(160) * b_ * std::max<Scalar>(v * v, 1) *
                                             spectral_norm_sym(sigma_inv)));
    return b_ * horizon_ >= need;
  }

  template <typename S>
  OUParams<S> cast() const {
    return OUParams<S>(S(b_), m_.template cast<S>(), sigma_.template cast<S>(), S(horizon_));
  }

 private:
  Scalar b_;
  Vector<Scalar> m_;
  Matrix<Scalar> sigma_;
  Scalar horizon_;
  Eigen::LLT<Matrix<Scalar>> llt_;
};

using OUParamsd = OUParams<double>;

template <typename Scalar>
struct TransitionMoments {
  Vector<Scalar> mean;
  Matrix<Scalar> cov;
};

/// Scalar variance factor (1 − e^{−2bt})/(2b) so that Σ_t = factor·Σ.
template <typename Scalar>
Scalar transition_cov_factor(const OUParams<Scalar>& p, Scalar t) {
  using std::expm1;
  return -expm1(Scalar(-2) * p.b() * t) / (Scalar(2) * p.b());
}

/// m_t(x) = (1 − e^{−bt})m + e^{−bt}x.
template <typename Scalar, typename Derived>
Vector<Scalar> transition_mean(const OUParams<Scalar>& p, const Eigen::MatrixBase<Derived>& x,
                               Scalar t) {
  using std::exp;
  using std::expm1;
  const Scalar decay = exp(-p.b() * t);
  return (-expm1(-p.b() * t)) * p.m() + decay * x;
}

template <typename Scalar, typename Derived>
TransitionMoments<Scalar> mean_cov_t(const OUParams<Scalar>& p, const Eigen::MatrixBase<Derived>& x,
                                     Scalar t) {
  if (!(t > 0)) throw std::invalid_argument("mean_cov_t: t must be > 0");
  require_dim(x.size(), p.dim(), "mean_cov_t");
  return {transition_mean(p, x, t), transition_cov_factor(p, t) * p.sigma()};
}

template <typename Scalar>
GaussianDist<Scalar> stationary(const OUParams<Scalar>& p) {
  return GaussianDist<Scalar>(p.m(), p.sigma() / (Scalar(2) * p.b()));
}

/// log 𝗊_t(y | x) = log 𝒩(y; m_t(x), Σ_t).
template <typename Scalar, typename D1, typename D2>
Scalar transition_log_pdf(const OUParams<Scalar>& p, const Eigen::MatrixBase<D1>& x,
                          const Eigen::MatrixBase<D2>& y, Scalar t) {
  auto mc = mean_cov_t(p, x, t);
  require_dim(y.size(), p.dim(), "transition_log_pdf");
  return log_pdf(GaussianDist<Scalar>(std::move(mc.mean), std::move(mc.cov)), y);
}

/// Per-component Gaussians 𝒩(m_k, Σ_k + Σ_t) whose densities at m_t(x)
/// give 𝒯_t g(x); for the infinite sentinel the added covariance is Σ/(2b).
template <typename Scalar>
std::vector<MixtureComponent<Scalar>> convolved_components(const OUParams<Scalar>& p,
                                                           const GaussianMixture<Scalar>& g,
                                                           const Elapsed& t) {
  require_dim(g.dim(), p.dim(), "OU operator mixture");
  const Scalar factor = t.is_infinite() ? Scalar(1) / (Scalar(2) * p.b())
                                        : transition_cov_factor(p, Scalar(t.value()));
  std::vector<MixtureComponent<Scalar>> out;
  out.reserve(g.size());
  for (const auto& c : g) {
    out.push_back({c.weight, GaussianDist<Scalar>(c.dist.mean(), c.dist.cov() + factor * p.sigma())});
  }
  return out;
}

template <typename Scalar, typename Derived>
Vector<Scalar> evaluation_point(const OUParams<Scalar>& p, const Elapsed& t,
                                const Eigen::MatrixBase<Derived>& x) {
  if (t.is_infinite()) return p.m();
  return transition_mean(p, x, Scalar(t.value()));
}

/// log 𝒯_t g(x) for a Gaussian mixture g, in closed form.
template <typename Scalar, typename Derived>
Scalar apply_Tt_mixture(const OUParams<Scalar>& p, const GaussianMixture<Scalar>& g, const Elapsed& t,
                        const Eigen::MatrixBase<Derived>& x) {
  require_dim(x.size(), p.dim(), "apply_Tt_mixture");
  const auto comps = convolved_components(p, g, t);
  const Vector<Scalar> z = evaluation_point(p, t, x);
  using std::log;
  std::vector<Scalar> terms;
  terms.reserve(comps.size());
  for (const auto& c : comps) terms.push_back(log(c.weight) + log_pdf(c.dist, z));
  return log_sum_exp(terms);
}

/// ∇_x log 𝒯_t g(x) = e^{−bt} Σ_k w_k(x)(Σ_k + Σ_t)^{-1}(m_k − m_t(x)).
/// Zero for the infinite sentinel.
template <typename Scalar, typename Derived>
Vector<Scalar> grad_log_Tt_mixture(const OUParams<Scalar>& p, const GaussianMixture<Scalar>& g,
                                   const Elapsed& t, const Eigen::MatrixBase<Derived>& x) {
  require_dim(x.size(), p.dim(), "grad_log_Tt_mixture");
  if (t.is_infinite()) return Vector<Scalar>::Zero(p.dim());
  const auto comps = convolved_components(p, g, t);
  const Vector<Scalar> z = evaluation_point(p, t, x);
  using std::exp;
  using std::log;
  std::vector<Scalar> logw;
  logw.reserve(comps.size());
  for (const auto& c : comps) logw.push_back(log(c.weight) + log_pdf(c.dist, z));
  const Scalar norm = log_sum_exp(logw);
  Vector<Scalar> grad = Vector<Scalar>::Zero(p.dim());
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const Scalar w = exp(logw[k] - norm);
    grad += w * comps[k].dist.llt().solve(comps[k].dist.mean() - z);
  }
  return exp(-p.b() * Scalar(t.value())) * grad;
}

/// 𝒯_t g as a function of x, written as exp(log_scale)·(normalized mixture).
template <typename Scalar>
struct ScaledMixture {
  Scalar log_scale;
  GaussianMixture<Scalar> mixture;
};

/// Closed-form image of a mixture under 𝒯_t (finite t): each component maps to
/// 𝒩(e^{bt}(m_k − (1 − e^{−bt})m), e^{2bt}(Σ_k + Σ_t)) with the Jacobian factor e^{dbt}.
template <typename Scalar>
ScaledMixture<Scalar> Tt_image(const OUParams<Scalar>& p, const GaussianMixture<Scalar>& g,
                               Scalar t) {
  const auto comps = convolved_components(p, g, Elapsed(static_cast<double>(t)));
  using std::exp;
  using std::expm1;
  const Scalar growth = exp(p.b() * t);
  const Vector<Scalar> shift = (-expm1(-p.b() * t)) * p.m();
  std::vector<MixtureComponent<Scalar>> out;
  for (const auto& c : comps) {
    out.push_back({c.weight, GaussianDist<Scalar>(growth * (c.dist.mean() - shift),
                                                  growth * growth * c.dist.cov())});
  }
  return {Scalar(p.dim()) * p.b() * t, GaussianMixture<Scalar>(std::move(out))};
}

}  // namespace sbp
