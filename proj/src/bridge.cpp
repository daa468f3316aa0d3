#include "sbp/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "sbp/linalg.hpp"
#include "sbp/rng.hpp"

namespace sbp {
namespace {

/// 2b/(1 − e^{−2bT}), the precision scale of the whitened transition.
double transition_precision(const OUParamsd& params) {
  return 2.0 * params.b() / -std::expm1(-2.0 * params.b() * params.T());
}

double max_abs(const MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

GaussianDistd base_marginal(const OUParamsd& params, const GaussianDistd& rho0) {
  require_dim(rho0.dim(), params.dim(), "base_marginal");
  const double decay = std::exp(-params.b() * params.T());
  return GaussianDistd(transition_mean(params, rho0.mean(), params.T()),
                       symmetrized(MatrixXd(transition_cov_factor(params, params.T()) * params.sigma() +
                                            decay * decay * rho0.cov())));
}

GaussianBridgeSolution solve(const OUParamsd& params, const GaussianDistd& init,
                             const GaussianDistd& target) {
  const int d = params.dim();
  require_dim(init.dim(), d, "bridge init");
  require_dim(target.dim(), d, "bridge target");
  const MatrixXd id = MatrixXd::Identity(d, d);
  const double b = params.b();
  const double T = params.T();
  const double decay = std::exp(-b * T);
  const double kappa = transition_precision(params);

  GaussianBridgeSolution sol;
  sol.sigma_inv_sqrt = sym_inv_sqrt(params.sigma());
  sol.S0 = symmetrized(MatrixXd(sol.sigma_inv_sqrt * init.cov() * sol.sigma_inv_sqrt));
  sol.ST = symmetrized(MatrixXd(sol.sigma_inv_sqrt * target.cov() * sol.sigma_inv_sqrt));
  sol.sigma2 = -std::expm1(-2.0 * b * T) / (2.0 * b) * std::exp(b * T);

  const MatrixXd s0_half = sym_sqrt(sol.S0);
  const MatrixXd s0_inv_half = sym_inv_sqrt(sol.S0);
  const double s4 = sol.sigma2 * sol.sigma2;
  sol.D_sigma = sym_sqrt(symmetrized(MatrixXd(4.0 * s0_half * sol.ST * s0_half + s4 * id)));
  sol.A_sigma = 0.5 * (s0_half * sol.D_sigma * s0_inv_half - sol.sigma2 * id);

  const auto s0_llt = checked_llt<double>(sol.S0, "bridge S0");
  const auto sT_llt = checked_llt<double>(sol.ST, "bridge ST");
  sol.S0_breve = symmetrized(MatrixXd(sol.S0 - sol.A_sigma * sT_llt.solve(sol.A_sigma.transpose())));
  sol.ST_breve = symmetrized(MatrixXd(sol.ST - sol.A_sigma.transpose() * s0_llt.solve(sol.A_sigma)));
  const auto s0b_llt = checked_llt<double>(sol.S0_breve, "bridge S0 Schur complement");
  const auto sTb_llt = checked_llt<double>(sol.ST_breve, "bridge ST Schur complement");

  const VectorXd mu0 = sol.sigma_inv_sqrt * init.mean();
  const VectorXd muT = sol.sigma_inv_sqrt * target.mean();
  const VectorXd level = sol.sigma_inv_sqrt * params.m();
  const double pull = -std::expm1(-b * T);  // 1 − e^{−bT}

  VectorXd mean(2 * d);
  mean << mu0, muT;
  MatrixXd cov(2 * d, 2 * d);
  cov << sol.S0, sol.A_sigma, sol.A_sigma.transpose(), sol.ST;
  sol.plan = GaussianDistd(mean, symmetrized(cov));

  // log ϱ_0: Schur term, +κe^{−2bT}‖z‖²/2, −κe^{−bT}(μ_T − (1 − e^{−bT})m)ᵀz (whitened).
  const MatrixXd s0b_inv = s0b_llt.solve(id);
  sol.q0_quad.Q = symmetrized(MatrixXd(s0b_inv - kappa * decay * decay * id));
  sol.q0_quad.l = s0b_inv * mu0 - kappa * decay * (muT - pull * level);
  sol.q0_quad.c = -0.5 * mu0.dot(s0b_inv * mu0);

  // log ϱ_T: Schur term, +κ‖z‖²/2, −κ((1 − e^{−bT})m + e^{−bT}μ_0)ᵀz (whitened).
  const MatrixXd sTb_inv = sTb_llt.solve(id);
  sol.qT_quad.Q = symmetrized(MatrixXd(sTb_inv - kappa * id));
  sol.qT_quad.l = sTb_inv * muT - kappa * (pull * level + decay * mu0);
  sol.qT_quad.c = -0.5 * muT.dot(sTb_inv * muT);
  return sol;
}

double scaled_transition_log_pdf(const OUParamsd& params, const GaussianBridgeSolution& sol,
                                 const VectorXd& z0, const VectorXd& zT) {
  const int d = params.dim();
  const double decay = std::exp(-params.b() * params.T());
  const double var = transition_cov_factor(params, params.T());
  const VectorXd center = (1.0 - decay) * (sol.sigma_inv_sqrt * params.m()) + decay * z0;
  return -0.5 * d * std::log(2.0 * std::numbers::pi * var) - 0.5 * (zT - center).squaredNorm() / var;
}

BridgeResiduals verify_plan(const GaussianBridgeSolution& sol, const OUParamsd& params,
                            const GaussianDistd& init, const GaussianDistd& target,
                            std::size_t points, std::uint64_t seed) {
  const int d = params.dim();
  if (points < 2) throw std::invalid_argument("verify_plan: need at least two points");
  BridgeResiduals r{};

  const MatrixXd s0 = sol.sigma_inv_sqrt * init.cov() * sol.sigma_inv_sqrt;
  const MatrixXd sT = sol.sigma_inv_sqrt * target.cov() * sol.sigma_inv_sqrt;
  const auto& pm = sol.plan.mean();
  const auto& pc = sol.plan.cov();
  r.marginal = std::max({max_abs(pc.topLeftCorner(d, d) - s0), max_abs(pc.bottomRightCorner(d, d) - sT),
                         max_abs(pm.head(d) - sol.sigma_inv_sqrt * init.mean()),
                         max_abs(pm.tail(d) - sol.sigma_inv_sqrt * target.mean())});

  const MatrixXd scaled_A = sol.sigma2 * sol.A_sigma;
  r.schur_identity = (sol.S0_breve * sol.ST - scaled_A).norm() / scaled_A.norm();

  const MatrixXd s0_half = sym_sqrt(sol.S0);
  const MatrixXd inner = s0_half * sol.ST * s0_half;
  r.commutation = (sol.D_sigma * inner - inner * sol.D_sigma).norm() / inner.norm();

  // Points drawn from the plan itself so they cover its bulk.
  Rng rng = make_stream(seed, 0);
  const MatrixXd zs = sample(sol.plan, rng, static_cast<Eigen::Index>(points));
  VectorXd gaps(zs.cols());
  for (Eigen::Index i = 0; i < zs.cols(); ++i) {
    const VectorXd z0 = zs.col(i).head(d);
    const VectorXd zT = zs.col(i).tail(d);
    gaps(i) = log_pdf(sol.plan, zs.col(i)) -
              (scaled_transition_log_pdf(params, sol, z0, zT) + sol.q0_quad(z0) + sol.qT_quad(zT));
  }
  r.factorization = (gaps.array() - gaps.mean()).abs().maxCoeff();
  return r;
}

double log_upsilon_T(const GaussianBridgeSolution& sol, const OUParamsd& params, const VectorXd& x,
                     UpsilonNormalization norm) {
  require_dim(x.size(), params.dim(), "log_upsilon_T");
  const double raw = sol.qT_quad(sol.sigma_inv_sqrt * x);
  if (norm == UpsilonNormalization::raw) return raw;
  // Stationary law in whitened coordinates: 𝒩(Σ^{-1/2}m, I/(2b)).
  const VectorXd level = sol.sigma_inv_sqrt * params.m();
  const double mean = sol.qT_quad(level) - 0.5 * sol.qT_quad.Q.trace() / (2.0 * params.b());
  return raw - mean;
}

bool upsilon_T_bounded_criterion(const GaussianBridgeSolution& sol, const OUParamsd& params) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sol.ST, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff() <= transition_cov_factor(params, params.T());
}

KeyValues bridge_to_key_values(const GaussianBridgeSolution& sol) {
  const int d = static_cast<int>(sol.S0.rows());
  KeyValues kv;
  kv.set("format", std::string("sbp-bridge"));
  kv.set("version", 1);
  kv.set("d", d);
  kv.set("sigma2", sol.sigma2);
  const std::pair<const char*, const MatrixXd*> mats[] = {
      {"S0", &sol.S0},           {"ST", &sol.ST},           {"D_sigma", &sol.D_sigma},
      {"A_sigma", &sol.A_sigma}, {"S0_breve", &sol.S0_breve}, {"ST_breve", &sol.ST_breve},
      {"plan.cov", &sol.plan.cov()}, {"q0.Q", &sol.q0_quad.Q}, {"qT.Q", &sol.qT_quad.Q}};
  for (const auto& [name, m] : mats) {
    kv.set(std::string(name) + ".shape", std::to_string(m->rows()) + " " + std::to_string(m->cols()));
    kv.set(name, format_matrix(*m));
  }
  kv.set("plan.mean", sol.plan.mean());
  kv.set("q0.l", sol.q0_quad.l);
  kv.set("q0.c", sol.q0_quad.c);
  kv.set("qT.l", sol.qT_quad.l);
  kv.set("qT.c", sol.qT_quad.c);
  return kv;
}

KlEstimate class_infimum_kl(const OUParamsd& params, const GaussianDistd& rho0,
                            const GaussianDistd& target, const ClassInfimumOptions& options) {
  const int d = params.dim();
  if (d > 2) throw std::invalid_argument("class_infimum_kl: supports d <= 2");
  require_dim(target.dim(), d, "class_infimum_kl target");

  // ψ ≡ 0 belongs to the class; its KL is closed form.
  const double zero_kl = kl_gaussians(target, base_marginal(params, rho0));
  if (zero_kl == 0.0) return {0.0, 0.0};

  Rng rng = make_stream(options.seed, 0);
  const MatrixXd data = sample(target, rng, options.n_synthetic);
  const auto result = fit(data, params, rho0, options.erm);
  const auto fitted = decode(result.theta_hat, options.erm.box, params);

  KlEstimate fitted_kl{};
  if (d == 1) {
    const double mu = target.mean()(0);
    const double sd = std::sqrt(target.cov()(0, 0));
    fitted_kl = kl_1d_grid(
        [&](double y) { return log_pdf(target, VectorXd::Constant(1, y)); },
        [&](double y) { return log_rho_T_quadrature(params, fitted, rho0, VectorXd::Constant(1, y)); },
        mu - 12.0 * sd, mu + 12.0 * sd, 2000);
  } else {
    const MarginalModel model(params, fitted, rho0, options.J_eval, options.erm.bank_seed + 1);
    fitted_kl = estimate_kl(
        options.seed + 1, options.n_eval,
        [&](const MatrixXd& ys) {
          VectorXd out(ys.cols());
          for (Eigen::Index i = 0; i < ys.cols(); ++i) out(i) = log_pdf(target, ys.col(i));
          return out;
        },
        [&](const MatrixXd& ys) { return log_rho_T_batch(model, ys).log_density; },
        [&](Eigen::Index n, std::uint64_t s) {
          Rng r = make_stream(s, 0);
          return sample(target, r, n);
        });
  }
  if (zero_kl <= fitted_kl.kl) return {zero_kl, 0.0};
  return fitted_kl;
}

}  // namespace sbp
