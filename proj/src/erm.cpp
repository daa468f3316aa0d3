#include "sbp/erm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "sbp/rng.hpp"
#include "sbp/stats.hpp"

namespace sbp {
namespace {

constexpr Eigen::Index kRowBlock = 256;
constexpr Eigen::Index kMaxCachedKernel = 16'000'000;

}  // namespace

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "quasi-newton-box") return OptimizerKind::quasi_newton_box;
  if (name == "adaptive-first-order") return OptimizerKind::adaptive_first_order;
  throw std::invalid_argument("unknown optimizer '" + name +
                              "' (quasi-newton-box|adaptive-first-order)");
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::quasi_newton_box ? "quasi-newton-box" : "adaptive-first-order";
}

void ERMConfig::validate() const {
  box.validate();
  if (restarts < 1) throw std::invalid_argument("ERMConfig: restarts must be >= 1");
  if (max_iters < 1) throw std::invalid_argument("ERMConfig: max_iters must be >= 1");
  if (!(grad_tol > 0)) throw std::invalid_argument("ERMConfig: grad_tol must be > 0");
  if (J_fit < 100) throw std::invalid_argument("ERMConfig: J_fit must be >= 100");
}

double empirical_risk(const MarginalModel& model, const MatrixXd& data) {
  if (data.cols() < 1) throw std::invalid_argument("empirical_risk: empty data");
  return -log_rho_T_batch(model, data).log_density.mean();
}

RiskObjective::RiskObjective(OUParamsd params, ParameterBox box,
                             std::shared_ptr<const TransitionBank> bank, MatrixXd data)
    : params_(std::move(params)), box_(box), bank_(std::move(bank)), data_(std::move(data)) {
  box_.validate();
  require_dim(box_.d, params_.dim(), "RiskObjective box");
  require_dim(data_.rows(), params_.dim(), "RiskObjective data");
  if (data_.cols() < 1) throw std::invalid_argument("RiskObjective: empty data");
  sigma_T_ = transition_cov_factor(params_, params_.T()) * params_.sigma();
  if (data_.cols() * bank_->size() <= kMaxCachedKernel) kernel_ = bank_->log_kernel_by_start(data_);
}

const MatrixXd& RiskObjective::kernel_block(Eigen::Index start, Eigen::Index len,
                                            MatrixXd& scratch) const {
  if (kernel_.size() > 0) return kernel_;
  scratch = bank_->log_kernel_by_start(data_.middleCols(start, len));
  return scratch;
}

double RiskObjective::value(const VectorXd& theta) const { return evaluate(theta, nullptr); }

double RiskObjective::value_and_grad(const VectorXd& theta, VectorXd& grad) const {
  grad.resize(box_.D());
  return evaluate(theta, &grad);
}

double RiskObjective::evaluate(const VectorXd& theta, VectorXd* grad) const {
  const Eigen::Index J = bank_->size();
  const Eigen::Index n = data_.cols();
  const int D = box_.D();
  const MixtureThetaGradient at_bank(theta, box_, sigma_T_);
  const MixtureThetaGradient at_data(theta, box_, MatrixXd::Zero(box_.d, box_.d));

  // log 𝒯_T e^ψ(x_j) + C, and its θ-gradient, per bank point.
  VectorXd log_t(J);
  MatrixXd grad_t;
  if (grad) grad_t.resize(D, J);
  for (Eigen::Index j = 0; j < J; ++j) {
    const VectorXd z = bank_->pushed_means().col(j);
    log_t(j) = grad ? at_bank.value_and_grad(z, grad_t.col(j)) : at_bank.value(z);
  }

  double total = 0.0;
  VectorXd weight_sum = VectorXd::Zero(J);
  VectorXd grad_data = VectorXd::Zero(D);
  VectorXd g(D);
  Eigen::ArrayXd e(J);
  MatrixXd scratch;
  for (Eigen::Index start = 0; start < n; start += kRowBlock) {
    const Eigen::Index len = std::min(kRowBlock, n - start);
    const MatrixXd& block = kernel_block(start, len, scratch);
    // Column offset into `block`: cached kernels hold every data point.
    const Eigen::Index offset = kernel_.size() > 0 ? start : 0;
    for (Eigen::Index i = 0; i < len; ++i) {
      const VectorXd y = data_.col(start + i);
      const double log_mix = grad ? at_data.value_and_grad(y, g) : at_data.value(y);
      if (grad) grad_data += g;
      e = block.col(offset + i).array() - log_t.array();
      const double top = e.maxCoeff();
      e = (e - top).exp();
      const double s = e.sum();
      total += log_mix + top + std::log(s);
      if (grad) weight_sum += (e / s).matrix();
    }
  }
  const double risk = -(total / static_cast<double>(n) - std::log(static_cast<double>(J)));
  if (grad) *grad = -(grad_data - grad_t * weight_sum) / static_cast<double>(n);
  return risk;
}

VectorXd moment_matched_start(const MatrixXd& data, const OUParamsd& params,
                              const GaussianDistd& rho0, const ParameterBox& box) {
  box.validate();
  const int d = box.d;
  require_dim(data.rows(), d, "moment_matched_start");
  if (data.cols() < 2) throw std::invalid_argument("moment_matched_start: need n >= 2");
  const MatrixXd id = MatrixXd::Identity(d, d);
  const VectorXd mu = data.rowwise().mean();
  const MatrixXd centered = data.colwise() - mu;
  MatrixXd cov = centered * centered.transpose() / static_cast<double>(data.cols() - 1);
  cov += 1e-9 * cov.trace() / d * id;

  const double decay = std::exp(-params.b() * params.T());
  const VectorXd base_mean = transition_mean(params, rho0.mean(), params.T());
  const MatrixXd base_cov = transition_cov_factor(params, params.T()) * params.sigma() +
                            decay * decay * rho0.cov();

  // Precision and mean of the Gaussian factor e^ψ with data ≈ e^ψ × base marginal.
  const MatrixXd data_prec = cov.llt().solve(id);
  const MatrixXd base_prec = base_cov.llt().solve(id);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(symmetrized(MatrixXd(data_prec - base_prec)));
  const double lo_sd = std::sqrt(box.eig_floor) + std::exp(-box.R) * 2.0;
  const double hi_sd = std::exp(box.R) * 0.5;
  // Directions where the data is wider than the base marginal admit no Gaussian
  // tilt; there the component takes the data's own spread around the data mean.
  const MatrixXd& vecs = eig.eigenvectors();
  bool untilted = false;
  VectorXd var(d);
  for (int i = 0; i < d; ++i) {
    const double lam = eig.eigenvalues()(i);
    double v = 1.0 / lam;
    if (!(lam > 0)) {
      untilted = true;
      v = vecs.col(i).dot(cov * vecs.col(i));
    }
    var(i) = std::clamp(v, lo_sd * lo_sd, hi_sd * hi_sd);
  }
  const MatrixXd S = vecs * var.asDiagonal() * vecs.transpose();
  VectorXd center = untilted ? mu : VectorXd(S * (data_prec * mu - base_prec * base_mean));
  if (!center.allFinite()) center = mu;

  // Split along the principal axis of the data.
  Eigen::SelfAdjointEigenSolver<MatrixXd> data_eig(cov);
  const VectorXd axis = data_eig.eigenvectors().col(d - 1) * std::sqrt(data_eig.eigenvalues()(d - 1));
  const MatrixXd factor = S.llt().matrixL();
  const double floor = std::sqrt(box.eig_floor);

  VectorXd theta = VectorXd::Zero(box.D());
  for (int k = 0; k < box.K; ++k) {
    const double offset = box.K > 1 ? (k - 0.5 * (box.K - 1)) / (0.5 * (box.K - 1)) * 0.5 : 0.0;
    theta.segment(box.mean_offset(k), d) = center + offset * axis;
    int idx = box.factor_offset(k);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j <= i; ++j, ++idx) {
        theta(idx) = (i == j) ? std::log(std::max(factor(i, i) - floor, std::exp(-box.R)))
                              : factor(i, j);
      }
  }
  return theta.cwiseMax(-box.R).cwiseMin(box.R);
}

ERMResult fit(const MatrixXd& data, const OUParamsd& params, const GaussianDistd& rho0,
              const ERMConfig& config) {
  config.validate();
  require_dim(config.box.d, params.dim(), "fit box");
  if (data.cols() < 2) throw std::invalid_argument("fit: need n >= 2 samples");
  const auto bank = make_transition_bank(params, rho0, config.J_fit, config.bank_seed);
  const RiskObjective objective(params, config.box, bank, data);
  const GradientObjective f = [&](const VectorXd& theta, VectorXd& grad) {
    return objective.value_and_grad(theta, grad);
  };
  const int D = config.box.D();
  const VectorXd lower = VectorXd::Constant(D, -config.box.R);
  const VectorXd upper = VectorXd::Constant(D, config.box.R);
  OptimizeOptions options;
  options.max_iters = config.max_iters;
  options.grad_tol = config.grad_tol;

  std::vector<VectorXd> starts{moment_matched_start(data, params, rho0, config.box)};
  Rng rng = make_stream(config.opt_seed, 0);
  std::uniform_real_distribution<double> uniform(-config.box.R, config.box.R);
  for (int r = 1; r < config.restarts; ++r) {
    VectorXd t(D);
    for (int i = 0; i < D; ++i) t(i) = uniform(rng);
    starts.push_back(t);
  }

  ERMResult result;
  result.best_restart = -1;
  result.final_risk = std::numeric_limits<double>::infinity();
  std::ostringstream failures;
  for (std::size_t r = 0; r < starts.size(); ++r) {
    try {
      const auto opt = config.optimizer == OptimizerKind::quasi_newton_box
                           ? minimize_lbfgs_box(f, starts[r], lower, upper, options)
                           : minimize_adam_box(f, starts[r], lower, upper, options);
      result.initial_risks.push_back(opt.trace.front());
      result.restart_risks.push_back(opt.value);
      result.restart_traces.push_back(opt.trace);
      if (opt.value < result.final_risk) {
        result.final_risk = opt.value;
        result.theta_hat = opt.x;
        result.risk_trace = opt.trace;
        result.achieved_grad_norm = opt.projected_grad_norm;
        result.best_restart = static_cast<int>(r);
      }
    } catch (const std::runtime_error& e) {
      failures << " restart " << r << ": " << e.what() << ';';
      result.initial_risks.push_back(std::numeric_limits<double>::infinity());
      result.restart_risks.push_back(std::numeric_limits<double>::infinity());
      result.restart_traces.emplace_back();
    }
  }
  if (result.best_restart < 0) {
    throw std::runtime_error("fit: all " + std::to_string(starts.size()) +
                             " restarts produced non-finite risk;" + failures.str());
  }
  return result;
}

KlEstimate estimate_kl(std::uint64_t sampler_seed, Eigen::Index n_eval, const BatchLogDensity& log_p,
                       const BatchLogDensity& log_q, const Sampler& p_sampler) {
  if (n_eval < 100) throw std::invalid_argument("estimate_kl: n_eval must be >= 100");
  const MatrixXd ys = p_sampler(n_eval, sampler_seed);
  const VectorXd diff = log_p(ys) - log_q(ys);
  for (Eigen::Index i = 0; i < diff.size(); ++i) {
    if (!std::isfinite(diff(i))) {
      std::ostringstream msg;
      msg << "estimate_kl: non-finite log ratio " << diff(i) << " at sample " << i << " ("
          << ys.col(i).transpose() << ')';
      throw std::runtime_error(msg.str());
    }
  }
  const auto est = mean_and_se(diff);
  return {est.mean, est.std_error};
}

KlEstimate kl_1d_grid(const std::function<double(double)>& log_p,
                      const std::function<double(double)>& log_q, double lo, double hi, int n) {
  if (!(hi > lo) || n < 4 || n % 4 != 0) {
    throw std::invalid_argument("kl_1d_grid: need hi > lo and n a positive multiple of 4");
  }
  const double h = (hi - lo) / n;
  std::vector<double> f(n + 1);
  for (int i = 0; i <= n; ++i) {
    const double y = lo + i * h;
    const double lp = log_p(y);
    const double p = std::exp(lp);
    f[i] = p > 0 ? p * (lp - log_q(y)) : 0.0;
    if (!std::isfinite(f[i])) throw std::runtime_error("kl_1d_grid: non-finite integrand at y=" + std::to_string(y));
  }
  auto simpson = [&](int stride) {
    const double step = h * stride;
    double s = f[0] + f[n];
    for (int i = stride, k = 1; i < n; i += stride, ++k) s += (k % 2 ? 4.0 : 2.0) * f[i];
    return s * step / 3.0;
  };
  const double fine = simpson(1);
  return {fine, std::abs(fine - simpson(2))};
}

}  // namespace sbp
