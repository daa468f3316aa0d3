#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sbp/gauss.hpp"
#include "sbp/ou.hpp"
#include "sbp/rng.hpp"

namespace sbp::testing {

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline VectorXd random_vector(int d, Rng& rng, double lo = -1.0, double hi = 1.0) {
  VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = uniform(rng, lo, hi);
  return v;
}

/// Q diag(λ) Qᵀ with λ uniform in [lo, hi] and a random rotation.
inline MatrixXd random_spd(int d, Rng& rng, double lo = 0.3, double hi = 2.0) {
  std::normal_distribution<double> normal;
  MatrixXd g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = normal(rng);
  Eigen::HouseholderQR<MatrixXd> qr(g);
  const MatrixXd q = qr.householderQ();
  VectorXd lam(d);
  for (int i = 0; i < d; ++i) lam(i) = uniform(rng, lo, hi);
  const MatrixXd s = q * lam.asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}

inline GaussianDistd random_gaussian(int d, Rng& rng, double spread = 1.0) {
  return GaussianDistd(random_vector(d, rng, -spread, spread), random_spd(d, rng));
}

inline GaussianMixtured random_mixture(int K, int d, Rng& rng) {
  std::vector<double> w(K);
  double total = 0.0;
  for (auto& x : w) total += (x = uniform(rng, 0.2, 1.0));
  std::vector<MixtureComponent<double>> comps;
  for (int k = 0; k < K; ++k) comps.push_back({w[k] / total, random_gaussian(d, rng, 1.5)});
  return GaussianMixtured(std::move(comps));
}

inline OUParamsd random_params(int d, Rng& rng, double T_lo = 0.3, double T_hi = 2.0) {
  return OUParamsd(uniform(rng, 0.3, 1.5), random_vector(d, rng), random_spd(d, rng, 0.5, 1.5),
                   uniform(rng, T_lo, T_hi));
}

/// Gaussian log density through a hand-written long double Cholesky.
inline long double oracle_log_pdf(const VectorXd& mean, const MatrixXd& cov, const VectorXd& x) {
  const int d = static_cast<int>(mean.size());
  std::vector<long double> L(d * d, 0.0L);
  for (int j = 0; j < d; ++j) {
    long double s = cov(j, j);
    for (int k = 0; k < j; ++k) s -= L[j * d + k] * L[j * d + k];
    L[j * d + j] = std::sqrt(s);
    for (int i = j + 1; i < d; ++i) {
      long double t = cov(i, j);
      for (int k = 0; k < j; ++k) t -= L[i * d + k] * L[j * d + k];
      L[i * d + j] = t / L[j * d + j];
    }
  }
  std::vector<long double> z(d);
  long double quad = 0.0L, log_det = 0.0L;
  for (int i = 0; i < d; ++i) {
    long double t = static_cast<long double>(x(i)) - mean(i);
    for (int k = 0; k < i; ++k) t -= L[i * d + k] * z[k];
    z[i] = t / L[i * d + i];
    quad += z[i] * z[i];
    log_det += 2.0L * std::log(L[i * d + i]);
  }
  const long double pi = 3.141592653589793238462643383279502884L;
  return -0.5L * d * std::log(2.0L * pi) - 0.5L * log_det - 0.5L * quad;
}

}  // namespace sbp::testing
