#include "sbp/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "sbp/conditioning.hpp"
#include "sbp/quadrature.hpp"
#include "sbp/rng.hpp"

namespace sbp {
namespace {

MatrixXd sigma_T(const OUParamsd& params) {
  return transition_cov_factor(params, params.T()) * params.sigma();
}

VectorXd compute_bank_log_h(const OUParamsd& params, const MixturePotential& potential,
                            const TransitionBank& bank) {
  VectorXd out = VectorXd::Zero(bank.size());
  if (potential.is_zero()) return out;
  const auto comps = convolved_components(params, potential.mixture(), Elapsed(params.T()));
  std::vector<double> terms(comps.size());
  for (Eigen::Index j = 0; j < bank.size(); ++j) {
    const auto z = bank.pushed_means().col(j);
    for (std::size_t k = 0; k < comps.size(); ++k) terms[k] = std::log(comps[k].weight) + log_pdf(comps[k].dist, z);
    out(j) = log_sum_exp(terms) - potential.C();
  }
  return out;
}

}  // namespace

TransitionBank::TransitionBank(const OUParamsd& params, MatrixXd starts) : starts_(std::move(starts)) {
  require_dim(starts_.rows(), params.dim(), "TransitionBank");
  if (starts_.cols() < 1) throw std::invalid_argument("TransitionBank: empty bank");
  const double decay = std::exp(-params.b() * params.T());
  pushed_ = decay * starts_;
  pushed_.colwise() += (-std::expm1(-params.b() * params.T())) * params.m();
  llt_ = checked_llt<double>(sigma_T(params), "TransitionBank Sigma_T");
  whitened_ = llt_.matrixL().solve(pushed_);
  whitened_sq_ = whitened_.colwise().squaredNorm().transpose();
  log_norm_ = -0.5 * params.dim() * std::log(2.0 * std::numbers::pi) - 0.5 * log_det(llt_);
}

MatrixXd TransitionBank::log_kernel(const MatrixXd& ys) const {
  require_dim(ys.rows(), starts_.rows(), "TransitionBank::log_kernel");
  const MatrixXd v = llt_.matrixL().solve(ys);
  const VectorXd v_sq = v.colwise().squaredNorm().transpose();
  MatrixXd out = v.transpose() * whitened_;  // n × J cross terms
  out.array().colwise() -= 0.5 * v_sq.array();
  out.array().rowwise() -= 0.5 * whitened_sq_.transpose().array();
  out.array() += log_norm_;
  return out;
}

MatrixXd TransitionBank::log_kernel_by_start(const MatrixXd& ys) const {
  require_dim(ys.rows(), starts_.rows(), "TransitionBank::log_kernel_by_start");
  const MatrixXd v = llt_.matrixL().solve(ys);
  const VectorXd v_sq = v.colwise().squaredNorm().transpose();
  MatrixXd out = whitened_.transpose() * v;
  out.array().colwise() += log_norm_ - 0.5 * whitened_sq_.array();
  out.array().rowwise() -= 0.5 * v_sq.transpose().array();
  return out;
}

namespace {

/// Each coordinate of the standardized draws takes one value in each of the n
/// equal-probability strata, in an independent random order.
MatrixXd latin_hypercube_sample(const GaussianDistd& dist, Rng& rng, Eigen::Index n) {
  const int d = dist.dim();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  MatrixXd z(d, n);
  for (int i = 0; i < d; ++i) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double u = (static_cast<double>(order[static_cast<std::size_t>(j)]) + unit(rng)) / static_cast<double>(n);
      z(i, j) = -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * std::clamp(u, 1e-300, 1.0 - 1e-16));
    }
  }
  MatrixXd out = dist.llt().matrixL() * z;
  out.colwise() += dist.mean();
  return out;
}

}  // namespace

std::shared_ptr<const TransitionBank> make_transition_bank(const OUParamsd& params,
                                                           const GaussianDistd& rho0, std::size_t J,
                                                           std::uint64_t seed) {
  if (J < 100) throw std::invalid_argument("MarginalModel: bank size J must be >= 100");
  auto rng = make_stream(seed, 0);
  return std::make_shared<const TransitionBank>(params, latin_hypercube_sample(rho0, rng, static_cast<Eigen::Index>(J)));
}

MarginalModel::MarginalModel(OUParamsd params, MixturePotential potential, GaussianDistd rho0,
                             std::size_t J, std::uint64_t bank_seed)
    : MarginalModel(params, std::move(potential), rho0, make_transition_bank(params, rho0, J, bank_seed), bank_seed) {}

MarginalModel::MarginalModel(OUParamsd params, MixturePotential potential, GaussianDistd rho0,
                             std::shared_ptr<const TransitionBank> bank, std::uint64_t bank_seed)
    : params_(std::move(params)), potential_(std::move(potential)), rho0_(std::move(rho0)),
      bank_(std::move(bank)), bank_seed_(bank_seed) {
  require_dim(rho0_.dim(), params_.dim(), "MarginalModel rho0");
  require_dim(potential_.dim(), params_.dim(), "MarginalModel potential");
  if (!bank_) throw std::logic_error("MarginalModel: missing bank");
  if (bank_->size() < 100) throw std::invalid_argument("MarginalModel: bank size J must be >= 100");
  bank_log_h_ = compute_bank_log_h(params_, potential_, *bank_);
}

MarginalModel MarginalModel::with_potential(MixturePotential potential) const {
  return MarginalModel(params_, std::move(potential), rho0_, bank_, bank_seed_);
}

double log_h(const OUParamsd& params, const MixturePotential& potential, const VectorXd& x, double t) {
  require_dim(x.size(), params.dim(), "log_h");
  if (!(t >= 0.0) || t > params.T()) throw std::invalid_argument("log_h: t outside [0, T]");
  if (potential.is_zero()) return 0.0;
  if (t == params.T()) return eval_psi(potential, x);
  return apply_Tt_mixture(params, potential.mixture(), Elapsed(params.T() - t), x) - potential.C();
}

double log_h(const MarginalModel& model, const VectorXd& x, double t) {
  return log_h(model.params(), model.potential(), x, t);
}

DensityBatch log_rho_T_batch(const MarginalModel& model, const MatrixXd& ys) {
  require_dim(ys.rows(), model.params().dim(), "log_rho_T");
  const auto J = static_cast<Eigen::Index>(model.J());
  DensityBatch out{VectorXd(ys.cols()), VectorXd(ys.cols())};
  constexpr Eigen::Index kBlock = 256;
  const double log_j = std::log(static_cast<double>(J));
  const double jack = static_cast<double>(J - 1) / static_cast<double>(J);
  for (Eigen::Index start = 0; start < ys.cols(); start += kBlock) {
    const Eigen::Index len = std::min(kBlock, ys.cols() - start);
    MatrixXd a = model.bank().log_kernel_by_start(ys.middleCols(start, len));
    a.colwise() -= model.bank_log_h();
    for (Eigen::Index i = 0; i < len; ++i) {
      const double top = a.col(i).maxCoeff();
      const Eigen::ArrayXd e = (a.col(i).array() - top).exp();
      const double total = e.sum();
      const double psi = eval_psi(model.potential(), ys.col(start + i));
      out.log_density(start + i) = psi + top + std::log(total) - log_j;
      // Leave-one-out estimates differ from log(total/(J−1)) by log1p(−u_j).
      const Eigen::ArrayXd u = e / total;
      Eigen::ArrayXd loo = -u * (1.0 + u * (0.5 + u / 3.0));
      if (u.maxCoeff() > 1e-3) {
        for (Eigen::Index j = 0; j < J; ++j)
          if (u(j) > 1e-3) loo(j) = std::log(std::max(1.0 - u(j), std::numeric_limits<double>::min()));
      }
      out.std_error(start + i) = std::sqrt(jack * (loo - loo.mean()).square().sum());
    }
  }
  return out;
}

double log_rho_T(const MarginalModel& model, const VectorXd& y) {
  return log_rho_T_batch(model, y).log_density(0);
}

double log_rho_T_quadrature(const OUParamsd& params, const MixturePotential& potential,
                            const GaussianDistd& rho0, const VectorXd& y) {
  const int d = params.dim();
  if (d > 2) throw std::invalid_argument("log_rho_T_quadrature: supports d <= 2");
  require_dim(y.size(), d, "log_rho_T_quadrature y");
  require_dim(rho0.dim(), d, "log_rho_T_quadrature rho0");
  const double horizon = params.T();
  const double psi_y = eval_psi(potential, y);

  auto log_integrand = [&](const VectorXd& x) {
    return transition_log_pdf(params, x, y, horizon) - log_h(params, potential, x, 0.0) +
           log_pdf(rho0, x);
  };

  const VectorXd sd = rho0.cov().diagonal().cwiseSqrt();
  const VectorXd lo = rho0.mean() - 10.0 * sd;
  const VectorXd hi = rho0.mean() + 10.0 * sd;

  // Scale by the largest value seen on a coarse grid and at the Gaussian posterior mode.
  const VectorXd mode = condition_endpoint(params, rho0, y).posterior.mean();
  double shift = log_integrand(mode.cwiseMax(lo).cwiseMin(hi));
  constexpr int kGrid = 41;
  if (d == 1) {
    for (int i = 0; i <= kGrid; ++i) {
      VectorXd x(1);
      x(0) = lo(0) + (hi(0) - lo(0)) * i / kGrid;
      shift = std::max(shift, log_integrand(x));
    }
    const double inner =
        integrate_1d(
            [&](double s) {
              VectorXd x(1);
              x(0) = s;
              return std::exp(log_integrand(x) - shift);
            },
            lo(0), hi(0), 1e-10)
            .value;
    return psi_y + shift + std::log(inner);
  }
  for (int i = 0; i <= kGrid; ++i)
    for (int j = 0; j <= kGrid; ++j) {
      VectorXd x(2);
      x << lo(0) + (hi(0) - lo(0)) * i / kGrid, lo(1) + (hi(1) - lo(1)) * j / kGrid;
      shift = std::max(shift, log_integrand(x));
    }
  const double inner = integrate_2d(
                           [&](double s, double t) {
                             VectorXd x(2);
                             x << s, t;
                             return std::exp(log_integrand(x) - shift);
                           },
                           lo(0), hi(0), lo(1), hi(1), 1e-9)
                           .value;
  return psi_y + shift + std::log(inner);
}

VectorXd grad_theta_log_rho_T(const MarginalModel& model, const VectorXd& y) {
  const auto& pot = model.potential();
  if (pot.is_zero() || !pot.box()) {
    throw std::invalid_argument("grad_theta_log_rho_T: requires a potential decoded from a box");
  }
  const auto& box = *pot.box();
  const auto& params = model.params();
  const MatrixXd sig_t = transition_cov_factor(params, params.T()) * params.sigma();
  const MixtureThetaGradient at_y(pot.theta(), box, MatrixXd::Zero(box.d, box.d));
  const MixtureThetaGradient at_bank(pot.theta(), box, sig_t);
  const auto [C, grad_C] = normalizer_gradient(pot.theta(), box, params);

  VectorXd grad_psi(box.D());
  at_y.value_and_grad(y, grad_psi);
  grad_psi -= grad_C;

  MatrixXd a = model.bank().log_kernel(y);
  a.rowwise() -= model.bank_log_h().transpose();
  const double top = a.maxCoeff();
  const Eigen::ArrayXd w = (a.row(0).array() - top).exp().transpose();
  const double total = w.sum();

  VectorXd weighted = VectorXd::Zero(box.D());
  VectorXd g(box.D());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    at_bank.value_and_grad(model.bank().pushed_means().col(j), g);
    weighted += (w(j) / total) * (g - grad_C);
  }
  return grad_psi - weighted;
}

MatrixXd sample_rho_T(const OUParamsd& params, const MixturePotential& potential,
                      const GaussianDistd& rho0, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_rho_T: n must be >= 1");
  const int d = params.dim();
  const double horizon = params.T();
  const MatrixXd sig_t = transition_cov_factor(params, horizon) * params.sigma();
  const MatrixXd id = MatrixXd::Identity(d, d);
  const auto sig_t_llt = checked_llt<double>(sig_t, "sample_rho_T");
  const MatrixXd sig_t_inv = sig_t_llt.solve(id);
  auto rng = make_stream(seed, 0);
  const MatrixXd starts = sample(rho0, rng, n);
  std::normal_distribution<double> normal;
  MatrixXd out(d, n);

  if (potential.is_zero()) {
    const MatrixXd factor = sig_t_llt.matrixL();
    for (Eigen::Index i = 0; i < n; ++i) {
      VectorXd z(d);
      for (int r = 0; r < d; ++r) z(r) = normal(rng);
      out.col(i) = transition_mean(params, starts.col(i), horizon) + factor * z;
    }
    return out;
  }

  struct Posterior {
    MatrixXd gain_prior;  // P Σ_k^{-1}
    MatrixXd gain_obs;    // P Σ_T^{-1}
    VectorXd prior_mean;
    MatrixXd factor;      // chol(P)
  };
  const auto& mix = potential.mixture();
  const auto convolved = convolved_components(params, mix, Elapsed(horizon));
  std::vector<Posterior> posts;
  for (const auto& c : mix) {
    const MatrixXd prior_inv = c.dist.llt().solve(id);
    const MatrixXd cov = symmetrized(MatrixXd((prior_inv + sig_t_inv).llt().solve(id)));
    posts.push_back({cov * prior_inv, cov * sig_t_inv, c.dist.mean(),
                     checked_llt<double>(cov, "sample_rho_T posterior").matrixL()});
  }
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> logw(mix.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const VectorXd center = transition_mean(params, starts.col(i), horizon);
    for (std::size_t k = 0; k < mix.size(); ++k)
      logw[k] = std::log(convolved[k].weight) + log_pdf(convolved[k].dist, center);
    const double norm = log_sum_exp(logw);
    double u = uniform(rng);
    std::size_t pick = mix.size() - 1;
    for (std::size_t k = 0; k < mix.size(); ++k) {
      u -= std::exp(logw[k] - norm);
      if (u < 0) {
        pick = k;
        break;
      }
    }
    VectorXd z(d);
    for (int r = 0; r < d; ++r) z(r) = normal(rng);
    const auto& post = posts[pick];
    out.col(i) = post.gain_prior * post.prior_mean + post.gain_obs * center + post.factor * z;
  }
  return out;
}

}  // namespace sbp
