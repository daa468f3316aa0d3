#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "sbp/bridge.hpp"
#include "sbp/quadrature.hpp"

using namespace sbp;
using sbp::testing::random_gaussian;
using sbp::testing::random_params;
using sbp::testing::random_vector;

namespace {

OUParamsd scalar_params(double b, double m, double sigma, double T) {
  return OUParamsd(b, VectorXd::Constant(1, m), MatrixXd::Constant(1, 1, sigma), T);
}

GaussianDistd scalar_gaussian(double mean, double var) {
  return GaussianDistd(VectorXd::Constant(1, mean), MatrixXd::Constant(1, 1, var));
}

VectorXd stack(const VectorXd& a, const VectorXd& b) {
  VectorXd out(a.size() + b.size());
  out << a, b;
  return out;
}

/// Max deviation from its mean of log plan − (log 𝖯 + q0 + qT) at plan draws.
double factorization_spread(const GaussianBridgeSolution& sol, const OUParamsd& p, const QuadraticForm& q0,
                            const QuadraticForm& qT, std::uint64_t seed) {
  Rng rng = make_stream(seed, 0);
  const MatrixXd pts = sample(sol.plan, rng, 100);
  const Eigen::Index d = p.dim();
  VectorXd r(pts.cols());
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    const VectorXd z0 = pts.col(i).head(d), zT = pts.col(i).tail(d);
    r(i) = log_pdf(sol.plan, pts.col(i)) - scaled_transition_log_pdf(p, sol, z0, zT) - q0(z0) - qT(zT);
  }
  return (r.array() - r.mean()).abs().maxCoeff();
}

}  // namespace

TEST(Solve, ScalarSigmaSquared) {
  const auto p = scalar_params(0.5, 0.0, 1.0, 2.0);
  const auto sol = solve(p, scalar_gaussian(0, 1), scalar_gaussian(0, 1));
  EXPECT_NEAR(sol.sigma2, (1 - std::exp(-2.0)) * std::exp(1.0), 1e-14);
  EXPECT_NEAR(sol.sigma2, 2.350402, 1e-6);
}

TEST(Solve, ScalarUnitCovariances) {
  const auto p = scalar_params(0.8, 0.0, 1.0, 1.3);
  const auto sol = solve(p, scalar_gaussian(0.2, 1), scalar_gaussian(-0.4, 1));
  const double s2 = sol.sigma2;
  EXPECT_NEAR(sol.D_sigma(0, 0), std::sqrt(4 + s2 * s2), 1e-12);
  EXPECT_NEAR(sol.A_sigma(0, 0), (std::sqrt(4 + s2 * s2) - s2) / 2, 1e-12);
}

TEST(Solve, WhitensWithSymmetricRoot) {
  Rng rng = make_stream(90, 0);
  const auto p = random_params(3, rng);
  const auto init = random_gaussian(3, rng), target = random_gaussian(3, rng);
  const auto sol = solve(p, init, target);
  EXPECT_LT((sol.sigma_inv_sqrt - sol.sigma_inv_sqrt.transpose()).norm(), 1e-14);
  EXPECT_LT((sol.sigma_inv_sqrt * p.sigma() * sol.sigma_inv_sqrt - MatrixXd::Identity(3, 3)).norm(), 1e-12);
  EXPECT_LT((sol.S0 - sol.sigma_inv_sqrt * init.cov() * sol.sigma_inv_sqrt).norm(), 1e-12);
  EXPECT_THROW(solve(p, init, random_gaussian(2, rng)), std::invalid_argument);
}

TEST(Solve, StationaryMarginalsReproduceReferenceTransition) {
  Rng rng = make_stream(91, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 1 + trial % 3;
    const auto p = random_params(d, rng);
    const auto law = stationary(p);
    const auto sol = solve(p, law, law);
    const double decay = std::exp(-p.b() * p.T());
    EXPECT_LT((2 * p.b() * sol.A_sigma - decay * MatrixXd::Identity(d, d)).norm(), 1e-10);
    // Conditional of z_T given z_0 under the plan is the whitened transition.
    const VectorXd z0 = random_vector(d, rng, -2, 2);
    const MatrixXd& c = sol.plan.cov();
    const MatrixXd gain = c.bottomLeftCorner(d, d) * c.topLeftCorner(d, d).inverse();
    const VectorXd cond_mean = sol.plan.mean().tail(d) + gain * (z0 - sol.plan.mean().head(d));
    const MatrixXd cond_cov = c.bottomRightCorner(d, d) - gain * c.topRightCorner(d, d);
    const VectorXd m_tilde = sol.sigma_inv_sqrt * p.m();
    const VectorXd mean = (1 - decay) * m_tilde + decay * z0;
    const MatrixXd cov = transition_cov_factor(p, p.T()) * MatrixXd::Identity(d, d);
    EXPECT_LT((cond_mean - mean).norm(), 1e-10);
    EXPECT_LT((cond_cov - cov).norm(), 1e-10);
  }
}

TEST(VerifyPlan, ResidualsSmallOnRandomInstances) {
  Rng rng = make_stream(92, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + trial % 3;
    const auto p = random_params(d, rng);
    const auto init = random_gaussian(d, rng), target = random_gaussian(d, rng);
    const auto sol = solve(p, init, target);
    const auto res = verify_plan(sol, p, init, target);
    EXPECT_LE(res.marginal, 1e-8) << "trial " << trial;
    EXPECT_LE(res.schur_identity, 1e-8) << "trial " << trial;
    EXPECT_LE(res.factorization, 1e-7) << "trial " << trial;
    EXPECT_LE(res.commutation, 1e-9) << "trial " << trial;
    // Plan covariance is PD with the prescribed blocks.
    EXPECT_EQ(Eigen::LLT<MatrixXd>(sol.plan.cov()).info(), Eigen::Success);
    EXPECT_LT((sol.plan.cov().topRightCorner(d, d) - sol.A_sigma).norm(), 1e-12);
    Eigen::SelfAdjointEigenSolver<MatrixXd> e0(sol.S0_breve), eT(sol.ST_breve), eD(sol.D_sigma);
    EXPECT_GT(e0.eigenvalues().minCoeff(), 0.0);
    EXPECT_GT(eT.eigenvalues().minCoeff(), 0.0);
    EXPECT_GT(eD.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(VerifyPlan, TerminalQuadraticCoefficient) {
  Rng rng = make_stream(93, 0);
  const auto p = random_params(2, rng);
  const auto sol = solve(p, random_gaussian(2, rng), random_gaussian(2, rng));
  // The ‖z_T‖² coefficient of log ϱ_T is b/(1 − e^{−2bT}) on top of the Schur term.
  const MatrixXd schur_inv = sol.ST_breve.inverse();
  const double coef = p.b() / (-std::expm1(-2 * p.b() * p.T()));
  EXPECT_LT((-0.5 * sol.qT_quad.Q - (-0.5 * schur_inv + coef * MatrixXd::Identity(2, 2))).norm(), 1e-10);
}

TEST(VerifyPlan, FlippedCenterSignInInitialPotentialBreaksFactorization) {
  Rng rng = make_stream(94, 0);
  const OUParamsd p(0.7, VectorXd::Constant(2, 1.2), sbp::testing::random_spd(2, rng), 1.5);
  const auto sol = solve(p, random_gaussian(2, rng), random_gaussian(2, rng));
  EXPECT_LE(factorization_spread(sol, p, sol.q0_quad, sol.qT_quad, 3), 1e-7);
  const double decay = std::exp(-p.b() * p.T());
  const double kappa = 2 * p.b() / (-std::expm1(-2 * p.b() * p.T()));
  QuadraticForm flipped = sol.q0_quad;
  flipped.l -= 2 * kappa * decay * (1 - decay) * (sol.sigma_inv_sqrt * p.m());
  EXPECT_GT(factorization_spread(sol, p, flipped, sol.qT_quad, 3), 1e-3);

  // With m = 0 the two readings coincide.
  const OUParamsd centered(0.7, VectorXd::Zero(2), p.sigma(), 1.5);
  const auto sol0 = solve(centered, random_gaussian(2, rng), random_gaussian(2, rng));
  EXPECT_LE(factorization_spread(sol0, centered, sol0.q0_quad, sol0.qT_quad, 4), 1e-7);
}

TEST(Solve, LongHorizonDecouplesPlan) {
  // σ² = (1 − e^{−T})e^{T/2} = 1e4 for b = 1/2.
  const double T = 2 * std::log(5e3 * (1 + std::sqrt(1 + 4e-8)));
  const OUParamsd p(0.5, VectorXd::Zero(2), MatrixXd::Identity(2, 2), T);
  Rng rng = make_stream(95, 0);
  const auto sol = solve(p, random_gaussian(2, rng), random_gaussian(2, rng));
  EXPECT_NEAR(sol.sigma2, 1e4, 1e-6);
  EXPECT_LE(sol.A_sigma.cwiseAbs().maxCoeff(), 1e-3);
}

TEST(ScaledTransition, IsWhitenedReferenceDensity) {
  Rng rng = make_stream(96, 0);
  const auto p = random_params(2, rng);
  const auto sol = solve(p, random_gaussian(2, rng), random_gaussian(2, rng));
  const MatrixXd sqrt_sigma = sol.sigma_inv_sqrt.inverse();
  for (int i = 0; i < 10; ++i) {
    const VectorXd z0 = random_vector(2, rng), zT = random_vector(2, rng);
    const double via_x = transition_log_pdf(p, VectorXd(sqrt_sigma * z0), VectorXd(sqrt_sigma * zT), p.T());
    EXPECT_NEAR(scaled_transition_log_pdf(p, sol, z0, zT), via_x + 0.5 * std::log(p.sigma().determinant()), 1e-11);
  }
}

TEST(LogUpsilonT, StationaryPointAtOriginForCenteredProblem) {
  Rng rng = make_stream(97, 0);
  const OUParamsd p(0.9, VectorXd::Zero(2), sbp::testing::random_spd(2, rng), 1.0);
  const GaussianDistd init(VectorXd::Zero(2), sbp::testing::random_spd(2, rng));
  const GaussianDistd target(VectorXd::Zero(2), sbp::testing::random_spd(2, rng));
  const auto sol = solve(p, init, target);
  EXPECT_LT(sol.qT_quad.gradient(VectorXd::Zero(2)).norm(), 1e-14);
  for (int j = 0; j < 2; ++j) {
    VectorXd e = VectorXd::Zero(2);
    e(j) = 1e-5;
    EXPECT_NEAR(log_upsilon_T(sol, p, e), log_upsilon_T(sol, p, VectorXd(-e)), 1e-14);
  }
}

TEST(LogUpsilonT, MatchesPlanDecomposition) {
  Rng rng = make_stream(98, 0);
  const auto p = random_params(2, rng);
  const auto init = random_gaussian(2, rng), target = random_gaussian(2, rng);
  const auto sol = solve(p, init, target);
  const MatrixXd sqrt_sigma = sol.sigma_inv_sqrt.inverse();
  const VectorXd z0 = sol.plan.mean().head(2);
  auto reconstructed = [&](const VectorXd& zT) {
    return log_pdf(sol.plan, stack(z0, zT)) - scaled_transition_log_pdf(p, sol, z0, zT);
  };
  const VectorXd z_ref = sol.plan.mean().tail(2);
  for (int i = 0; i < 20; ++i) {
    const VectorXd zT = z_ref + random_vector(2, rng, -1.5, 1.5);
    const double lhs = log_upsilon_T(sol, p, VectorXd(sqrt_sigma * zT)) - log_upsilon_T(sol, p, VectorXd(sqrt_sigma * z_ref));
    EXPECT_NEAR(lhs, reconstructed(zT) - reconstructed(z_ref), 1e-8);
  }
}

TEST(LogUpsilonT, StationaryNormalizationHasZeroMean) {
  Rng rng = make_stream(99, 0);
  const auto p = random_params(2, rng);
  const auto sol = solve(p, random_gaussian(2, rng), random_gaussian(2, rng));
  const auto law = stationary(p);
  const double avg = gauss_expectation(
      law, [&](const VectorXd& x) { return log_upsilon_T(sol, p, x, UpsilonNormalization::stationary); });
  EXPECT_NEAR(avg, 0.0, 1e-10);
  const VectorXd x = random_vector(2, rng);
  const double shift = log_upsilon_T(sol, p, x) - log_upsilon_T(sol, p, x, UpsilonNormalization::stationary);
  const VectorXd x2 = random_vector(2, rng);
  EXPECT_NEAR(shift, log_upsilon_T(sol, p, x2) - log_upsilon_T(sol, p, x2, UpsilonNormalization::stationary), 1e-12);
}

TEST(LogUpsilonT, BoundednessCriterionImpliesConcaveQuadratic) {
  Rng rng = make_stream(100, 0);
  int bounded_seen = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int d = 1 + trial % 3;
    const auto p = random_params(d, rng);
    const double scale = sbp::testing::uniform(rng, 0.05, 1.0);
    const GaussianDistd target(random_vector(d, rng), scale * sbp::testing::random_spd(d, rng, 0.1, 0.6) * p.sigma()(0, 0));
    const auto sol = solve(p, random_gaussian(d, rng), target);
    if (!upsilon_T_bounded_criterion(sol, p)) continue;
    ++bounded_seen;
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sol.qT_quad.Q);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10);
  }
  EXPECT_GT(bounded_seen, 0);
  const auto p = scalar_params(1.0, 0.0, 1.0, 1.0);
  const double factor = transition_cov_factor(p, 1.0);
  EXPECT_TRUE(upsilon_T_bounded_criterion(solve(p, scalar_gaussian(0, 1), scalar_gaussian(0, 0.9 * factor)), p));
  EXPECT_FALSE(upsilon_T_bounded_criterion(solve(p, scalar_gaussian(0, 1), scalar_gaussian(0, 1.1 * factor)), p));
}

TEST(BridgeExport, WritesShapesAndVersion) {
  Rng rng = make_stream(101, 0);
  const auto p = random_params(2, rng);
  const auto sol = solve(p, random_gaussian(2, rng), random_gaussian(2, rng));
  const auto kv = bridge_to_key_values(sol);
  EXPECT_EQ(kv.get("format"), "sbp-bridge");
  EXPECT_EQ(kv.get_int("version"), 1);
  EXPECT_EQ(kv.get("A_sigma.shape"), "2 2");
  const MatrixXd back = parse_matrix(kv.get("A_sigma"), 2, 2);
  EXPECT_EQ(back, sol.A_sigma);
}

TEST(ClassInfimumKl, ReferenceMarginalIsExactlyZero) {
  const auto p = scalar_params(1.0, 0.2, 1.0, 1.0);
  const auto rho0 = scalar_gaussian(-0.5, 0.8);
  ClassInfimumOptions opts;
  opts.erm.box = ParameterBox{1, 1, 3.0, 0.05, 0.05};
  const auto est = class_infimum_kl(p, rho0, base_marginal(p, rho0), opts);
  EXPECT_EQ(est.kl, 0.0);
  EXPECT_EQ(est.se, 0.0);
}

TEST(ClassInfimumKl, RealizableGaussianAndShrinkingBox) {
  const auto p = scalar_params(1.0, 0.0, 1.0, 1.0);
  const auto rho0 = GaussianDistd::standard(1);
  const ParameterBox wide{1, 1, 3.0, 0.05, 0.05};
  const auto psi = decode((VectorXd(2) << 2.0, std::log(0.7 - std::sqrt(0.05))).finished(), wide, p);
  const MatrixXd ys = sample_rho_T(p, psi, rho0, 1000000, 5);
  const VectorXd mean = ys.rowwise().mean();
  const MatrixXd centered = ys.colwise() - mean;
  const GaussianDistd target(mean, centered * centered.transpose() / (ys.cols() - 1.0));

  ClassInfimumOptions opts;
  opts.n_synthetic = 10000;
  opts.erm.box = wide;
  opts.erm.J_fit = 1000;
  const auto loose = class_infimum_kl(p, rho0, target, opts);
  EXPECT_LE(loose.kl, 0.005);

  opts.erm.box.R = 1.0;
  const auto tight = class_infimum_kl(p, rho0, target, opts);
  EXPECT_GT(tight.kl, loose.kl);
}

TEST(BaseMarginal, ClosedForm) {
  Rng rng = make_stream(102, 0);
  const auto p = random_params(2, rng);
  const auto rho0 = random_gaussian(2, rng);
  const auto base = base_marginal(p, rho0);
  const double decay = std::exp(-p.b() * p.T());
  EXPECT_LT((base.mean() - transition_mean(p, rho0.mean(), p.T())).norm(), 1e-14);
  EXPECT_LT((base.cov() - (transition_cov_factor(p, p.T()) * p.sigma() + decay * decay * rho0.cov())).norm(), 1e-14);
}
