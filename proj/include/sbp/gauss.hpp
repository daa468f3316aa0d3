#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <numbers>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sbp/linalg.hpp"
#include "sbp/types.hpp"

namespace sbp {

/// 𝒩(mean, cov) with a cached Cholesky factor. Construction fails loudly on a
/// non-symmetric or non-PD covariance.
template <typename Scalar>
class GaussianDist {
 public:
  GaussianDist(Vector<Scalar> mean, Matrix<Scalar> cov)
      : mean_(std::move(mean)), cov_(std::move(cov)) {
    if (mean_.size() < 1 || mean_.size() > kMaxDimension) {
      throw std::invalid_argument("GaussianDist: dimension out of range");
    }
    require_dim(cov_.rows(), mean_.size(), "GaussianDist cov rows");
    require_dim(cov_.cols(), mean_.size(), "GaussianDist cov cols");
    if (!mean_.allFinite() || !cov_.allFinite()) {
      throw std::invalid_argument("GaussianDist: non-finite parameters");
    }
    if (!is_symmetric(cov_)) throw std::invalid_argument("GaussianDist: covariance not symmetric");
    llt_ = checked_llt<Scalar>(cov_, "GaussianDist");
    log_det_ = sbp::log_det(llt_);
  }

  static GaussianDist standard(int d) {
    return GaussianDist(Vector<Scalar>::Zero(d), Matrix<Scalar>::Identity(d, d));
  }

  int dim() const { return static_cast<int>(mean_.size()); }
  const Vector<Scalar>& mean() const { return mean_; }
  const Matrix<Scalar>& cov() const { return cov_; }
  const Eigen::LLT<Matrix<Scalar>>& llt() const { return llt_; }
  Scalar log_det() const { return log_det_; }

  /// ‖cov^{-1/2}(x − mean)‖² through the Cholesky factor.
  template <typename Derived>
  Scalar mahalanobis_sq(const Eigen::MatrixBase<Derived>& x) const {
    require_dim(x.size(), mean_.size(), "mahalanobis_sq");
    Vector<Scalar> r = x - mean_;
    llt_.matrixL().solveInPlace(r);
    return r.squaredNorm();
  }

  template <typename S>
  GaussianDist<S> cast() const {
    return GaussianDist<S>(mean_.template cast<S>(), cov_.template cast<S>());
  }

 private:
  Vector<Scalar> mean_;
  Matrix<Scalar> cov_;
  Eigen::LLT<Matrix<Scalar>> llt_;
  Scalar log_det_{};
};

template <typename Scalar>
struct MixtureComponent {
  Scalar weight;
  GaussianDist<Scalar> dist;
};

/// Finite Gaussian mixture with strictly positive weights summing to one.
template <typename Scalar>
class GaussianMixture {
 public:
  explicit GaussianMixture(std::vector<MixtureComponent<Scalar>> components)
      : components_(std::move(components)) {
    if (components_.empty()) throw std::invalid_argument("GaussianMixture: no components");
    const int d = components_.front().dist.dim();
    Scalar total = 0;
    for (const auto& c : components_) {
      if (!(c.weight > 0)) throw std::invalid_argument("GaussianMixture: weights must be > 0");
      require_dim(c.dist.dim(), d, "GaussianMixture component");
      total += c.weight;
    }
    using std::abs;
    if (abs(total - Scalar(1)) > Scalar(1e-10)) {
      throw std::invalid_argument("GaussianMixture: weights must sum to 1");
    }
  }

  GaussianMixture(std::initializer_list<MixtureComponent<Scalar>> components)
      : GaussianMixture(std::vector<MixtureComponent<Scalar>>(components)) {}

  explicit GaussianMixture(GaussianDist<Scalar> single)
      : GaussianMixture(std::vector<MixtureComponent<Scalar>>{{Scalar(1), std::move(single)}}) {}

  int dim() const { return components_.front().dist.dim(); }
  std::size_t size() const { return components_.size(); }
  const MixtureComponent<Scalar>& operator[](std::size_t k) const { return components_[k]; }
  auto begin() const { return components_.begin(); }
  auto end() const { return components_.end(); }

  template <typename S>
  GaussianMixture<S> cast() const {
    std::vector<MixtureComponent<S>> out;
    for (const auto& c : components_) out.push_back({S(c.weight), c.dist.template cast<S>()});
    return GaussianMixture<S>(std::move(out));
  }

 private:
  std::vector<MixtureComponent<Scalar>> components_;
};

using GaussianDistd = GaussianDist<double>;
using GaussianMixtured = GaussianMixture<double>;

template <typename Scalar>
Scalar log_two_pi() {
  return std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
}

/// Log-sum-exp with max subtraction. Returns −∞ for an all −∞ input.
template <typename Range>
auto log_sum_exp(const Range& values) {
  using Scalar = std::decay_t<decltype(*std::begin(values))>;
  using std::exp;
  using std::log;
  Scalar top = -std::numeric_limits<Scalar>::infinity();
  for (const auto& v : values) top = std::max<Scalar>(top, v);
  if (!std::isfinite(static_cast<double>(top))) return top;
  Scalar acc = 0;
  for (const auto& v : values) acc += exp(v - top);
  return top + log(acc);
}

template <typename Scalar, typename Derived>
Scalar log_pdf(const GaussianDist<Scalar>& dist, const Eigen::MatrixBase<Derived>& x) {
  const Scalar d = dist.dim();
  return -Scalar(0.5) * d * log_two_pi<Scalar>() - Scalar(0.5) * dist.log_det() -
         Scalar(0.5) * dist.mahalanobis_sq(x);
}

template <typename Scalar, typename Derived>
Scalar log_mixture_pdf(const GaussianMixture<Scalar>& mix, const Eigen::MatrixBase<Derived>& x) {
  require_dim(x.size(), mix.dim(), "log_mixture_pdf");
  using std::log;
  std::vector<Scalar> terms;
  terms.reserve(mix.size());
  for (const auto& c : mix) terms.push_back(log(c.weight) + log_pdf(c.dist, x));
  return log_sum_exp(terms);
}

/// Closed-form KL(p ‖ q) for Gaussians; clamped at zero and exactly zero for
/// identical parameters.
template <typename Scalar>
Scalar kl_gaussians(const GaussianDist<Scalar>& p, const GaussianDist<Scalar>& q) {
  require_dim(p.dim(), q.dim(), "kl_gaussians");
  if (p.mean() == q.mean() && p.cov() == q.cov()) return Scalar(0);
  const Matrix<Scalar> qinv_p = q.llt().solve(p.cov());
  const Vector<Scalar> dm = q.mean() - p.mean();
  const Scalar quad = dm.dot(q.llt().solve(dm));
  const Scalar kl = Scalar(0.5) * (qinv_p.trace() + quad - Scalar(p.dim()) + q.log_det() - p.log_det());
  return std::max(kl, Scalar(0));
}

/// n i.i.d. draws through the Cholesky factor, one column per draw.
template <typename Scalar, typename Rng>
Matrix<Scalar> sample(const GaussianDist<Scalar>& dist, Rng& rng, Eigen::Index n) {
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  std::normal_distribution<Scalar> normal;
  Matrix<Scalar> z(dist.dim(), n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < dist.dim(); ++i) z(i, j) = normal(rng);
  Matrix<Scalar> out = dist.llt().matrixL() * z;
  out.colwise() += dist.mean();
  return out;
}

/// Component index drawn proportionally to the mixture weights.
template <typename Scalar, typename Rng>
std::size_t sample_component(const GaussianMixture<Scalar>& mix, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  for (std::size_t k = 0; k + 1 < mix.size(); ++k) {
    r -= static_cast<double>(mix[k].weight);
    if (r < 0) return k;
  }
  return mix.size() - 1;
}

template <typename Scalar, typename Rng>
Matrix<Scalar> sample(const GaussianMixture<Scalar>& mix, Rng& rng, Eigen::Index n) {
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  Matrix<Scalar> out(mix.dim(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto k = sample_component(mix, rng);
    out.col(j) = sample(mix[k].dist, rng, 1).col(0);
  }
  return out;
}

}  // namespace sbp
