#include <cmath>
#include <limits>
#include <numbers>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "sbp/diagnostics.hpp"
#include "sbp/stats.hpp"

using namespace sbp;
using sbp::testing::random_params;
using sbp::testing::random_vector;
using sbp::testing::uniform;

namespace {

using ld = long double;
const ld kE2 = std::exp(2.0L);

// Second implementations, written from the formulas in long double.
ld upsilon_ld(const TheoryInputs& in, ld n, ld delta) {
  const ld log_lambda = in.Lambda > 0 ? std::log(static_cast<ld>(in.Lambda)) : -std::numeric_limits<ld>::infinity();
  const ld big = std::max(static_cast<ld>(in.M), log_lambda);
  const ld first = static_cast<ld>(in.Lambda) * in.d + in.M + in.d;
  const ld second = in.d + std::log(static_cast<ld>(in.R) * in.L * n / delta) +
                    big * std::sqrt(static_cast<ld>(in.d)) * std::exp(-static_cast<ld>(in.b) * in.T);
  return first * second * in.D * std::log(n) / n;
}

ld cal_K_ld(int d, ld b, ld t) {
  const ld rd = std::sqrt(static_cast<ld>(d));
  return std::pow(1 - std::exp(-2 * b * t), -5 * kE2 * rd) * std::exp(2 * kE2 * rd * std::asin(std::exp(-b * t)));
}

ld whitened_sq(const OUParamsd& p, const VectorXd& x) {
  const VectorXd z = p.sigma_llt().matrixL().solve(VectorXd(x - p.m()));
  ld s = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) s += static_cast<ld>(z(i)) * z(i);
  return s;
}

ld cal_A_ld(const OUParamsd& p, const VectorXd& x, ld t) {
  const ld rd = std::sqrt(static_cast<ld>(p.dim()));
  const ld b = p.b();
  return (b * kE2 / rd * whitened_sq(p, x) + 4 * kE2 * rd) * std::asin(std::exp(-b * t)) -
         10 * kE2 * rd * std::log(1 - std::exp(-2 * b * t));
}

ld cal_G_ld(const VectorXd& x, const OUParamsd& p, ld A, ld B, ld M, ld alpha) {
  const ld rd = std::sqrt(static_cast<ld>(p.dim()));
  const ld r = std::sqrt(whitened_sq(p, x));
  const ld eM = std::exp(M);
  return B * eM + std::pow(2.0L, alpha - 1) * A * eM * std::pow(r, alpha) +
         std::pow(4.0L, alpha - 1) * A * eM * std::pow(2 * static_cast<ld>(p.b()), -alpha / 2) *
             (std::pow(10 * alpha * rd, alpha) + std::pow(static_cast<ld>(p.dim()), alpha));
}

TheoryInputs random_inputs(Rng& rng) {
  TheoryInputs in;
  in.Lambda = uniform(rng, 0.05, 5.0);
  in.M = uniform(rng, 0.0, 4.0);
  in.d = 1 + static_cast<int>(uniform(rng, 0, 8));
  in.D = 1 + static_cast<int>(uniform(rng, 0, 40));
  in.R = uniform(rng, 0.5, 6);
  in.L = uniform(rng, 0.5, 20);
  in.b = uniform(rng, 0.2, 2);
  in.T = uniform(rng, 0.5, 10);
  in.v = uniform(rng, 0.5, 3);
  return in;
}

void expect_rel(double value, ld oracle, double tol = 1e-12) {
  EXPECT_LE(std::abs(static_cast<ld>(value) - oracle), tol * std::abs(oracle)) << value << " vs " << static_cast<double>(oracle);
}

GaussianMixtured scalar_mixture(std::vector<std::array<double, 3>> comps) {
  std::vector<MixtureComponent<double>> out;
  for (const auto& [w, m, v] : comps)
    out.push_back({w, GaussianDistd(VectorXd::Constant(1, m), MatrixXd::Constant(1, 1, v))});
  return GaussianMixtured(std::move(out));
}

struct DensityPair {
  GaussianMixtured p, q;
};

DensityPair random_pair(Rng& rng) {
  auto draw = [&] {
    const int K = 1 + static_cast<int>(uniform(rng, 0, 3));
    std::vector<std::array<double, 3>> c;
    double total = 0;
    for (int k = 0; k < K; ++k) {
      c.push_back({uniform(rng, 0.2, 1), uniform(rng, -2, 2), uniform(rng, 0.3, 2)});
      total += c.back()[0];
    }
    for (auto& x : c) x[0] /= total;
    return scalar_mixture(c);
  };
  return {draw(), draw()};
}

BatchLogDensity mixture_density(const GaussianMixtured& g) {
  return [g](const MatrixXd& ys) {
    VectorXd out(ys.cols());
    for (Eigen::Index i = 0; i < ys.cols(); ++i) out(i) = log_mixture_pdf(g, ys.col(i));
    return out;
  };
}

Sampler mixture_sampler(const GaussianMixtured& g) {
  return [g](Eigen::Index n, std::uint64_t seed) {
    Rng rng = make_stream(seed, 0);
    return sample(g, rng, n);
  };
}

}  // namespace

TEST(Upsilon, AgreesWithSecondImplementation) {
  Rng rng = make_stream(110, 0);
  for (int i = 0; i < 100; ++i) {
    const auto in = random_inputs(rng);
    const double n = std::floor(uniform(rng, 2, 1e6));
    const double delta = uniform(rng, 1e-4, 0.49);
    const double value = upsilon(in, n, delta);
    EXPECT_GT(value, 0.0);
    expect_rel(value, upsilon_ld(in, n, delta));
  }
}

TEST(Upsilon, MonotoneInNAndLinearInD) {
  Rng rng = make_stream(111, 0);
  const auto in = random_inputs(rng);
  for (double n = 8; n < 1e6; n *= 1.5) EXPECT_LT(upsilon(in, n * 1.5, 0.1), upsilon(in, n, 0.1));
  TheoryInputs doubled = in;
  doubled.D *= 2;
  EXPECT_NEAR(upsilon(doubled, 1000, 0.1), 2 * upsilon(in, 1000, 0.1), 1e-14 * upsilon(doubled, 1000, 0.1));
  EXPECT_THROW(upsilon(in, 1, 0.1), std::invalid_argument);
  EXPECT_THROW(upsilon(in, 10, 0.5), std::invalid_argument);
}

TEST(Upsilon, NonPositiveLambdaUsesMBranch) {
  TheoryInputs in;
  in.Lambda = 0.0;
  in.M = 0.5;
  expect_rel(upsilon(in, 100, 0.1), upsilon_ld(in, 100, 0.1));
}

TEST(CalK, AgreesWithSecondImplementation) {
  Rng rng = make_stream(112, 0);
  for (int i = 0; i < 100; ++i) {
    const int d = 1 + static_cast<int>(uniform(rng, 0, 16));
    const double b = uniform(rng, 0.2, 2), t = uniform(rng, 0.3, 15);
    const double value = cal_K(d, b, t);
    EXPECT_GE(value, 1.0);
    expect_rel(value, cal_K_ld(d, b, t));
  }
}

TEST(CalK, DecreasesToOne) {
  double prev = cal_K(3, 1.0, 0.5);
  for (double t = 0.6; t < 12; t += 0.25) {
    const double v = cal_K(3, 1.0, t);
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_NEAR(cal_K(3, 1.0, 60.0), 1.0, 1e-12);
  EXPECT_THROW(cal_K(1, 1.0, 0.0), std::invalid_argument);
}

TEST(CalK, ExcessDecaysLikeExponential) {
  // Constant from a coarse sweep must bound a finer sweep.
  for (int d : {1, 2, 4, 8, 16}) {
    const double lo = 5 + std::log(static_cast<double>(d));
    const double c = cal_K_excess_constant(d, lo, 20.0, 100);
    EXPECT_TRUE(std::isfinite(c));
    EXPECT_GT(c, 0.0);
    for (double bt = lo; bt <= 20.0; bt += 0.0371) {
      EXPECT_LE(cal_K(d, 1.0, bt) - 1.0, 1.01 * c * std::sqrt(d) * std::exp(-bt)) << "d=" << d << " bT=" << bt;
    }
  }
}

TEST(CalA, AgreesWithSecondImplementationAndLimits) {
  Rng rng = make_stream(113, 0);
  for (int i = 0; i < 100; ++i) {
    const int d = 1 + i % 3;
    const auto p = random_params(d, rng);
    const VectorXd x = random_vector(d, rng, -4, 4);
    const double t = uniform(rng, 0.05, 10);
    expect_rel(cal_A(p, x, t), cal_A_ld(p, x, t));
  }
  const auto p = random_params(2, rng);
  EXPECT_LT(cal_A(p, p.m(), 60.0 / p.b()), 1e-20);
  const VectorXd dir = random_vector(2, rng);
  double prev = cal_A(p, p.m(), 1.0);
  for (double s = 0.5; s < 10; s += 0.5) {
    const double v = cal_A(p, VectorXd(p.m() + s * dir), 1.0);
    EXPECT_GT(v, prev);
    prev = v;
  }
  EXPECT_THROW(cal_A(p, p.m(), -1.0), std::invalid_argument);
}

TEST(CalG, AgreesWithSecondImplementationAndSpecialCases) {
  Rng rng = make_stream(114, 0);
  for (int i = 0; i < 100; ++i) {
    const int d = 1 + i % 3;
    const auto p = random_params(d, rng);
    const VectorXd x = random_vector(d, rng, -3, 3);
    const double A = uniform(rng, 0, 3), B = uniform(rng, 0, 3), M = uniform(rng, 0, 2), alpha = uniform(rng, 0.1, 3);
    expect_rel(cal_G(x, p, A, B, M, alpha), cal_G_ld(x, p, A, B, M, alpha));
  }
  const auto p = random_params(2, rng);
  const VectorXd x = random_vector(2, rng);
  EXPECT_DOUBLE_EQ(cal_G(x, p, 0.0, 1.5, 0.7, 2.0), 1.5 * std::exp(0.7));
  // At x = m only the constant terms survive.
  const double at_m = cal_G(p.m(), p, 1.0, 0.0, 0.0, 2.0);
  const double expected = 4.0 / (2 * p.b()) * (std::pow(20 * std::sqrt(2.0), 2) + 4.0);
  EXPECT_NEAR(at_m, expected, 1e-10 * expected);
}

TEST(Chi2Check, ExamplesAndGrid) {
  const auto var = chi2_moment_check(1, 2.0, 1000000, 3);
  EXPECT_NEAR(var.lhs, std::sqrt(2.0), 3 * var.lhs_se);
  EXPECT_EQ(var.rhs, 20.0);
  EXPECT_TRUE(var.pass);

  const auto d4 = chi2_moment_check(4, 1.0, 1000000, 4);
  // E|χ²₄ − 4| = 16 e^{−2}.
  EXPECT_NEAR(d4.lhs, 16 * std::exp(-2.0), 3 * d4.lhs_se);
  EXPECT_EQ(d4.rhs, 20.0);
  EXPECT_TRUE(d4.pass);

  for (int d : {1, 4, 16})
    for (double p : {1.0, 2.0, 4.0}) {
      const auto r = chi2_moment_check(d, p, 100000, 7);
      EXPECT_TRUE(r.pass) << "d=" << d << " p=" << p;
      EXPECT_NEAR(r.rhs, 10 * p * std::sqrt(d), 1e-12);
    }
  EXPECT_THROW(chi2_moment_check(1, 1.0, 1000, 1), std::invalid_argument);
  EXPECT_THROW(chi2_moment_check(1, 0.5, 100000, 1), std::invalid_argument);
}

TEST(SquaredLogInequality, IdenticalDensitiesGiveZero) {
  const auto g = scalar_mixture({{0.3, -1, 0.5}, {0.7, 1, 1}});
  const auto r = squared_log_inequality_check(mixture_density(g), mixture_sampler(g), mixture_density(g), 0.1, 10000, 1);
  EXPECT_EQ(r.lhs, 0.0);
  EXPECT_NEAR(r.rhs, 0.0, 1e-14);
  EXPECT_TRUE(r.pass);
}

TEST(SquaredLogInequality, GaussianAndMixturePairs) {
  const auto p = scalar_mixture({{1.0, 0.0, 1.0}});
  const auto q = scalar_mixture({{1.0, 1.0, 2.0}});
  const auto r = squared_log_inequality_check(mixture_density(p), mixture_sampler(p), mixture_density(q), 0.1, 1000000, 2);
  EXPECT_TRUE(r.pass);
  EXPECT_GT(r.lhs, 0.0);
  const auto mix = scalar_mixture({{0.5, -1.5, 0.4}, {0.5, 1.5, 0.4}});
  const auto r2 = squared_log_inequality_check(mixture_density(mix), mixture_sampler(mix), mixture_density(p), 0.1, 200000, 3);
  EXPECT_TRUE(r2.pass);
  EXPECT_THROW(squared_log_inequality_check(mixture_density(p), mixture_sampler(p), mixture_density(q), 1.0, 1000, 1),
               std::invalid_argument);
}

TEST(SquaredLogInequality, RandomPairsAcrossOmega) {
  Rng rng = make_stream(115, 0);
  for (int i = 0; i < 20; ++i) {
    const auto pair = random_pair(rng);
    for (double omega : {0.01, 0.1, 0.4}) {
      const auto r = squared_log_inequality_check(mixture_density(pair.p), mixture_sampler(pair.p),
                                                  mixture_density(pair.q), omega, 50000, 100 + i);
      EXPECT_TRUE(r.pass) << "pair " << i << " omega " << omega << ": " << r.lhs << " > " << r.rhs;
    }
  }
}

TEST(Bernstein, IdenticalModelsGiveZero) {
  Rng rng = make_stream(116, 0);
  const auto p = random_params(1, rng);
  const ParameterBox box{2, 1, 3.0, 0.05, 0.05};
  const auto psi = decode(random_vector(box.D(), rng), box, p);
  const MarginalModel model(p, psi, GaussianDistd::standard(1), 500, 1);
  const auto bounds = assumption_bounds(psi, p);
  const auto rep = bernstein_diagnostic(model, model, 5000, 2, bounds, 1000);
  EXPECT_EQ(rep.variance, 0.0);
  EXPECT_EQ(rep.kl, 0.0);
  EXPECT_EQ(rep.ratio, 0.0);
}

TEST(Bernstein, SummaryOfKnownRatios) {
  VectorXd r(4);
  r << 1.0, -1.0, 2.0, 0.0;
  const AssumptionBounds bounds{0.5, 1.0};
  const auto rep = bernstein_from_log_ratios(r, bounds, 2, 100);
  EXPECT_NEAR(rep.kl, 0.5, 1e-15);
  EXPECT_NEAR(rep.variance, 5.0 / 3.0, 1e-14);
  const double scale = (0.5 * 2 + 1.0 + 2) * std::log(100.0) * (0.5 + 0.01);
  EXPECT_NEAR(rep.ratio, rep.variance / scale, 1e-14);
}

TEST(Bernstein, VarianceShrinksTowardTruth) {
  const OUParamsd p(1.0, VectorXd::Zero(1), MatrixXd::Identity(1, 1), 1.0);
  const ParameterBox box{2, 1, 3.0, 0.05, 0.05};
  const VectorXd star = (VectorXd(5) << -0.4, -1.5, 1.2, -0.9, -0.6).finished();
  const VectorXd delta = (VectorXd(5) << 0.8, 0.6, -0.5, 0.4, 0.3).finished();
  const auto rho0 = GaussianDistd::standard(1);
  const auto bank = make_transition_bank(p, rho0, 2000, 3);
  const MarginalModel truth(p, decode(star, box, p), rho0, bank, 3);
  double prev = std::numeric_limits<double>::infinity();
  for (double s : {1.0, 0.5, 0.25, 0.1}) {
    const MarginalModel fitted = truth.with_potential(decode(VectorXd(star + s * delta), box, p));
    const auto rep = bernstein_diagnostic(truth, fitted, 20000, 5, assumption_bounds(truth.potential(), p), 1000);
    EXPECT_LT(rep.variance, prev) << "s=" << s;
    EXPECT_GT(rep.kl, -3 * rep.kl_se);
    prev = rep.variance;
  }
}

TEST(Orlicz, IdenticalModelsHaveZeroScale) {
  const OUParamsd p(1.0, VectorXd::Zero(1), MatrixXd::Identity(1, 1), 1.0);
  const MarginalModel model(p, MixturePotential::zero(1), GaussianDistd::standard(1), 500, 1);
  const auto rep = orlicz_tail_diagnostic(model, model, 2000, 3, 1.0);
  EXPECT_EQ(rep.scale, 0.0);
  EXPECT_GE(rep.bound, 1.0);
}

TEST(Orlicz, PerturbedModelsGiveFiniteScaleAndDecreasingTail) {
  Rng rng = make_stream(117, 0);
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = random_params(1, rng);
    const ParameterBox box{2, 1, 3.0, 0.05, 0.05};
    const VectorXd theta = random_vector(box.D(), rng);
    const auto rho0 = GaussianDistd::standard(1);
    const MarginalModel truth(p, decode(theta, box, p), rho0, 1000, trial);
    const MarginalModel fitted =
        truth.with_potential(decode(VectorXd((theta + random_vector(box.D(), rng, -0.3, 0.3)).cwiseMin(3).cwiseMax(-3)), box, p));
    const auto rep = orlicz_tail_diagnostic(truth, fitted, 5000, 9, 1.0);
    EXPECT_TRUE(std::isfinite(rep.scale));
    EXPECT_GT(rep.scale, 0.0);
    EXPECT_GE(rep.A, 0.0);
    EXPECT_GE(rep.bound, 1.0);
    ASSERT_FALSE(rep.curve.empty());
    for (std::size_t i = 1; i < rep.curve.size(); ++i) {
      EXPECT_LE(rep.curve[i].exceedance, rep.curve[i - 1].exceedance);
      EXPECT_GT(rep.curve[i].threshold, rep.curve[i - 1].threshold);
    }
  }
}

TEST(Orlicz, EnvelopeCoversSamples) {
  Rng rng = make_stream(118, 0);
  const MatrixXd ys = sample(GaussianDistd::standard(2), rng, 400);
  const VectorXd center = ys.rowwise().mean();
  VectorXd xi(ys.cols());
  for (Eigen::Index i = 0; i < ys.cols(); ++i) xi(i) = 0.3 * (ys.col(i) - center).squaredNorm() + 0.1 * std::sin(i);
  const auto rep = orlicz_from_samples(xi, ys, 1.0);
  for (Eigen::Index i = 0; i < ys.cols(); ++i) {
    EXPECT_LE(xi(i), rep.A * (ys.col(i) - center).squaredNorm() + rep.B + 1e-9);
  }
  // The empirical mean of exp(|ξ|/scale) is 2 at the reported scale.
  EXPECT_NEAR((xi.array().abs() / rep.scale).exp().mean(), 2.0, 1e-6);
}

TEST(StationaryAbsGap, SwitchSelectsLaw) {
  Rng rng = make_stream(119, 0);
  const ParameterBox box{2, 1, 3.0, 0.05, 0.05};
  const OUParamsd p(0.8, VectorXd::Constant(1, 0.2), MatrixXd::Constant(1, 1, 1.3), 1.0);
  const auto a = decode(random_vector(box.D(), rng), box, p);
  const auto b = decode(random_vector(box.D(), rng), box, p);
  EXPECT_EQ(stationary_abs_gap(a, a, p), 0.0);
  const double st = stationary_abs_gap(a, b, p, InfinityLaw::stationary);
  const double unit = stationary_abs_gap(a, b, p, InfinityLaw::unit_scale);
  EXPECT_GT(st, 0.0);
  EXPECT_NE(st, unit);
  // Independent check of the stationary reading by Monte Carlo.
  const MatrixXd xs = sample(stationary(p), rng, 200000);
  VectorXd gaps(xs.cols());
  for (Eigen::Index i = 0; i < xs.cols(); ++i) gaps(i) = std::abs(eval_psi(a, xs.col(i)) - eval_psi(b, xs.col(i)));
  const auto est = mean_and_se(gaps);
  EXPECT_NEAR(st, est.mean, 4 * est.std_error + 1e-3 * est.mean);

  // For 2b = 1 both readings coincide.
  const OUParamsd half(0.5, VectorXd::Constant(1, 0.2), MatrixXd::Constant(1, 1, 1.3), 1.0);
  const auto a2 = decode(a.theta(), box, half);
  const auto b2 = decode(b.theta(), box, half);
  EXPECT_DOUBLE_EQ(stationary_abs_gap(a2, b2, half, InfinityLaw::stationary),
                   stationary_abs_gap(a2, b2, half, InfinityLaw::unit_scale));
}
