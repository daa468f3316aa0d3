#include "sbp/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "sbp/quadrature.hpp"
#include "sbp/rng.hpp"
#include "sbp/stats.hpp"

namespace sbp {
namespace {

constexpr double kE2 = std::numbers::e * std::numbers::e;

double whitened_distance_sq(const OUParamsd& params, const VectorXd& x) {
  require_dim(x.size(), params.dim(), "whitened distance");
  const VectorXd diff = x - params.m();
  return diff.dot(params.sigma_llt().solve(diff));
}

/// Sample variance and its standard error from the fourth central moment.
std::pair<double, double> variance_with_se(const VectorXd& x) {
  const double n = static_cast<double>(x.size());
  const double mean = x.mean();
  const Eigen::ArrayXd c = x.array() - mean;
  const double m2 = c.square().sum() / n;
  const double m4 = c.square().square().sum() / n;
  const double var = m2 * n / (n - 1.0);
  return {var, std::sqrt(std::max(m4 - m2 * m2, 0.0) / n)};
}

}  // namespace

void TheoryInputs::validate() const {
  if (!(Lambda >= 0) || !(M >= 0)) throw std::invalid_argument("TheoryInputs: Lambda, M must be >= 0");
  if (d < 1 || D < 1) throw std::invalid_argument("TheoryInputs: d, D must be >= 1");
  if (!(R > 0) || !(L > 0) || !(b > 0) || !(T > 0) || !(v > 0))
    throw std::invalid_argument("TheoryInputs: R, L, b, T, v must be > 0");
}

double upsilon(const TheoryInputs& in, double n, double delta) {
  in.validate();
  if (!(n >= 2)) throw std::invalid_argument("upsilon: n must be >= 2");
  if (!(delta > 0 && delta < 0.5)) throw std::invalid_argument("upsilon: delta must lie in (0, 1/2)");
  const double d = in.d;
  const double log_lambda =
      in.Lambda > 0 ? std::log(in.Lambda) : -std::numeric_limits<double>::infinity();
  const double tail = std::max(in.M, log_lambda) * std::sqrt(d) * std::exp(-in.b * in.T);
  return (in.Lambda * d + in.M + d) * (d + std::log(in.R * in.L * n / delta) + tail) * in.D *
         std::log(n) / n;
}

double cal_K(int d, double b, double t) {
  if (!(t > 0)) throw std::invalid_argument("cal_K: t must be > 0");
  if (d < 1 || !(b > 0)) throw std::invalid_argument("cal_K: need d >= 1 and b > 0");
  const double c = kE2 * std::sqrt(static_cast<double>(d));
  const double log_k = -5.0 * c * std::log1p(-std::exp(-2.0 * b * t)) +
                       2.0 * c * std::asin(std::exp(-b * t));
  return std::exp(log_k);
}

double cal_K_excess_constant(int d, double bt_lo, double bt_hi, int points) {
  if (points < 2 || !(bt_hi > bt_lo)) throw std::invalid_argument("cal_K_excess_constant: bad grid");
  double worst = 0.0;
  for (int i = 0; i < points; ++i) {
    const double bt = bt_lo + (bt_hi - bt_lo) * i / (points - 1);
    const double excess = std::expm1(std::log(cal_K(d, 1.0, bt)));
    worst = std::max(worst, excess / (std::sqrt(static_cast<double>(d)) * std::exp(-bt)));
  }
  return worst;
}

double cal_A(const OUParamsd& params, const VectorXd& x, double t) {
  if (!(t > 0)) throw std::invalid_argument("cal_A: t must be > 0");
  const double root_d = std::sqrt(static_cast<double>(params.dim()));
  const double b = params.b();
  return (b * kE2 / root_d * whitened_distance_sq(params, x) + 4.0 * kE2 * root_d) *
             std::asin(std::exp(-b * t)) -
         10.0 * kE2 * root_d * std::log1p(-std::exp(-2.0 * b * t));
}

double cal_G(const VectorXd& x, const OUParamsd& params, double A, double B, double M, double alpha) {
  if (!(A >= 0) || !(B >= 0) || !(alpha >= 0))
    throw std::invalid_argument("cal_G: A, B, alpha must be >= 0");
  const double d = params.dim();
  const double eM = std::exp(M);
  const double dist = std::sqrt(whitened_distance_sq(params, x));
  return B * eM + std::pow(2.0, alpha - 1.0) * A * eM * std::pow(dist, alpha) +
         std::pow(4.0, alpha - 1.0) * A * eM * std::pow(2.0 * params.b(), -alpha / 2.0) *
             (std::pow(10.0 * alpha * std::sqrt(d), alpha) + std::pow(d, alpha));
}

Chi2Check chi2_moment_check(int d, double p, std::size_t n_mc, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("chi2_moment_check: d must be >= 1");
  if (!(p >= 1)) throw std::invalid_argument("chi2_moment_check: p must be >= 1");
  if (n_mc < 100000) throw std::invalid_argument("chi2_moment_check: n_mc must be >= 1e5");
  Rng rng = make_stream(seed, 0);
  std::chi_squared_distribution<double> chi2(d);
  VectorXd values(static_cast<Eigen::Index>(n_mc));
  for (auto& v : values) v = std::pow(std::abs(chi2(rng) - d), p);
  const auto moment = mean_and_se(values);
  const double lhs = std::pow(moment.mean, 1.0 / p);
  const double lhs_se = moment.std_error / (p * std::pow(moment.mean, (p - 1.0) / p));
  const double rhs = 10.0 * p * std::sqrt(static_cast<double>(d));
  return {lhs, lhs_se, rhs, lhs + 3.0 * lhs_se <= rhs};
}

BernsteinReport bernstein_from_log_ratios(const VectorXd& log_ratio, const AssumptionBounds& bounds,
                                          int d, double n_supplied) {
  if (log_ratio.size() < 2) throw std::invalid_argument("bernstein: need at least two samples");
  if (!(n_supplied >= 2)) throw std::invalid_argument("bernstein: n must be >= 2");
  if (!log_ratio.allFinite()) throw std::runtime_error("bernstein: non-finite log ratio");
  const auto kl = mean_and_se(log_ratio);
  const auto [var, var_se] = variance_with_se(log_ratio);
  const double scale = (bounds.Lambda * d + bounds.M + d) * std::log(n_supplied) *
                       (kl.mean + 1.0 / n_supplied);
  return {var, var_se, kl.mean, kl.std_error, var / scale};
}

VectorXd sample_log_ratios(const MarginalModel& truth, const MarginalModel& fitted, Eigen::Index n_mc,
                           std::uint64_t seed) {
  const MatrixXd ys = sample_rho_T(truth.params(), truth.potential(), truth.rho0(), n_mc, seed);
  const VectorXd out = log_rho_T_batch(truth, ys).log_density - log_rho_T_batch(fitted, ys).log_density;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (!std::isfinite(out(i))) {
      throw std::runtime_error("log ratio not finite at sample " + std::to_string(i));
    }
  }
  return out;
}

BernsteinReport bernstein_diagnostic(const MarginalModel& truth, const MarginalModel& fitted,
                                     Eigen::Index n_mc, std::uint64_t seed,
                                     const AssumptionBounds& bounds, double n_supplied) {
  return bernstein_from_log_ratios(sample_log_ratios(truth, fitted, n_mc, seed), bounds,
                                   truth.params().dim(), n_supplied);
}

SquaredLogCheck squared_log_inequality_check(const BatchLogDensity& log_p, const Sampler& p_sampler,
                                             const BatchLogDensity& log_q, double omega,
                                             Eigen::Index n_mc, std::uint64_t seed) {
  if (!(omega > 0 && omega < 1)) throw std::invalid_argument("squared_log: omega must lie in (0, 1)");
  if (n_mc < 2) throw std::invalid_argument("squared_log: n_mc must be >= 2");
  const MatrixXd xs = p_sampler(n_mc, seed);
  const VectorXd r = log_p(xs) - log_q(xs);
  // log(((1 − ω)q + ωp)/q) = log(1 − ω + ω e^r), evaluated stably.
  const Eigen::ArrayXd mix = r.array().unaryExpr([omega](double v) {
    const double a = std::log1p(-omega);
    const double b = std::log(omega) + v;
    const double top = std::max(a, b);
    return top + std::log(std::exp(a - top) + std::exp(b - top));
  });
  const Eigen::ArrayXd left = r.array().square();
  const Eigen::ArrayXd right = 2.0 * std::log(1.0 / omega) * r.array() + 2.0 * mix.square();
  if (!left.allFinite() || !right.allFinite()) throw std::runtime_error("squared_log: non-finite terms");
  const auto diff = mean_and_se((left - right).matrix());
  const double lhs = left.mean();
  const double rhs = right.mean();
  return {lhs, rhs, diff.std_error, lhs <= rhs + 3.0 * diff.std_error};
}

OrliczReport orlicz_from_samples(const VectorXd& log_ratio, const MatrixXd& ys, double v) {
  if (log_ratio.size() < 2 || ys.cols() != log_ratio.size())
    throw std::invalid_argument("orlicz: need matching samples");
  const Eigen::ArrayXd abs_xi = log_ratio.array().abs();
  OrliczReport rep{};
  const double top = abs_xi.maxCoeff();
  if (top == 0.0) {
    rep.scale = 0.0;
  } else {
    auto excess = [&](double u) { return (abs_xi / u).exp().mean() - 2.0; };
    double lo = top * 1e-6, hi = std::max(top, 1e-300);
    while (excess(hi) > 0) hi *= 2.0;
    while (!(excess(lo) > 0) && lo > 1e-300) lo *= 0.5;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (excess(mid) > 0 ? lo : hi) = mid;
    }
    rep.scale = hi;
  }

  // Envelope ξ ≤ A r + B with A, B ≥ 0, chosen to minimize 2B + 2(d + 2)A v².
  const int d = static_cast<int>(ys.rows());
  const VectorXd center = ys.rowwise().mean();
  const Eigen::ArrayXd r = (ys.colwise() - center).colwise().squaredNorm().transpose().array();
  const Eigen::ArrayXd xi = log_ratio.array();
  const double slope_cost = 2.0 * (d + 2) * v * v;
  auto B_of = [&](double A) { return std::max(0.0, (xi - A * r).maxCoeff()); };
  auto cost = [&](double A) { return 2.0 * B_of(A) + slope_cost * A; };
  double a_hi = 0.0;
  for (Eigen::Index i = 0; i < xi.size(); ++i)
    if (r(i) > 0 && xi(i) > 0) a_hi = std::max(a_hi, xi(i) / r(i));
  double a_lo = 0.0;
  for (int it = 0; it < 200 && a_hi - a_lo > 1e-14 * std::max(a_hi, 1.0); ++it) {
    const double m1 = a_lo + (a_hi - a_lo) / 3.0;
    const double m2 = a_hi - (a_hi - a_lo) / 3.0;
    if (cost(m1) <= cost(m2)) {
      a_hi = m2;
    } else {
      a_lo = m1;
    }
  }
  rep.A = 0.5 * (a_lo + a_hi);
  if (cost(0.0) <= cost(rep.A)) rep.A = 0.0;
  rep.B = B_of(rep.A);
  rep.bound = std::max(1.0, 2.0 * rep.B + slope_cost * rep.A);

  std::vector<double> sorted(abs_xi.data(), abs_xi.data() + abs_xi.size());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  for (double q : {0.5, 0.75, 0.9, 0.95, 0.99, 0.999}) {
    const double t = sorted[static_cast<std::size_t>(q * (n - 1))];
    const double frac = static_cast<double>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), t)) / n;
    const double bound = rep.scale > 0 ? 2.0 * std::exp(-t / rep.scale) : 0.0;
    rep.curve.push_back({t, frac, bound});
  }
  return rep;
}

OrliczReport orlicz_tail_diagnostic(const MarginalModel& truth, const MarginalModel& fitted,
                                    Eigen::Index n_mc, std::uint64_t seed, double v) {
  const MatrixXd ys = sample_rho_T(truth.params(), truth.potential(), truth.rho0(), n_mc, seed);
  const VectorXd xi = log_rho_T_batch(truth, ys).log_density - log_rho_T_batch(fitted, ys).log_density;
  return orlicz_from_samples(xi, ys, v);
}

double stationary_abs_gap(const MixturePotential& a, const MixturePotential& b,
                          const OUParamsd& params, InfinityLaw law) {
  const double scale = law == InfinityLaw::stationary ? 1.0 / (2.0 * params.b()) : 1.0;
  const GaussianDistd dist(params.m(), scale * params.sigma());
  auto gap = [&](const VectorXd& x) { return std::abs(eval_psi(a, x) - eval_psi(b, x)); };
  if (params.dim() > 1) return gauss_expectation(dist, gap);
  // The integrand has kinks where ψ_1 = ψ_2; Hermite rules converge slowly there.
  const double mean = dist.mean()(0), sd = std::sqrt(dist.cov()(0, 0));
  const double inv_root_two_pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  auto f = [&](double z) {
    return inv_root_two_pi * std::exp(-0.5 * z * z) * gap(VectorXd::Constant(1, mean + sd * z));
  };
  return integrate_1d(f, -12.0, 12.0, 1e-10).value;
}

}  // namespace sbp
