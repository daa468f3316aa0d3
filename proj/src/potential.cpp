#include "sbp/potential.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "sbp/quadrature.hpp"
#include "sbp/rng.hpp"

namespace sbp {
namespace {

constexpr std::uint64_t kDefaultNormalizerSeed = 0x5eed;
constexpr std::size_t kBoundProbes = 500;

VectorXd softmax_with_pinned_last(const VectorXd& theta, int K) {
  VectorXd u = VectorXd::Zero(K);
  u.head(K - 1) = theta.head(K - 1);
  u.array() -= u.maxCoeff();
  VectorXd s = u.array().exp();
  return s / s.sum();
}

VectorXd floored_weights(const VectorXd& softmax, const ParameterBox& box) {
  return (box.w_floor + (1.0 - box.K * box.w_floor) * softmax.array()).matrix();
}

MatrixXd decode_factor(const VectorXd& theta, const ParameterBox& box, int k) {
  const int d = box.d;
  const double floor = std::sqrt(box.eig_floor);
  MatrixXd factor = MatrixXd::Zero(d, d);
  int idx = box.factor_offset(k);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= i; ++j, ++idx) factor(i, j) = (i == j) ? floor + std::exp(theta(idx)) : theta(idx);
  return factor;
}

struct NormalizerPoints {
  MatrixXd nodes;
  VectorXd weights;
  bool monte_carlo;
};

NormalizerPoints normalizer_points(const OUParamsd& params, const NormalizeMethod& method) {
  const auto law = stationary(params);
  if (method.kind == NormalizeMethod::Kind::quadrature) {
    const auto& rule = gauss_hermite_rule(params.dim());
    return {gauss_hermite_nodes(law, rule), rule.weights, false};
  }
  if (method.samples < 2) throw std::invalid_argument("normalize: Monte Carlo needs >= 2 samples");
  auto rng = make_stream(method.seed, 0);
  const auto n = static_cast<Eigen::Index>(method.samples);
  return {sample(law, rng, n), VectorXd::Constant(n, 1.0 / static_cast<double>(n)), true};
}

}  // namespace

void ParameterBox::validate() const {
  if (K < 1) throw std::invalid_argument("ParameterBox: K must be >= 1");
  if (d < 1 || d > kMaxDimension) throw std::invalid_argument("ParameterBox: d out of range");
  if (!(R > 0)) throw std::invalid_argument("ParameterBox: R must be > 0");
  if (!(w_floor > 0) || w_floor > 1.0 / K + 1e-15)
    throw std::invalid_argument("ParameterBox: w_floor must lie in (0, 1/K]");
  if (!(eig_floor > 0)) throw std::invalid_argument("ParameterBox: eig_floor must be > 0");
}

bool ParameterBox::contains(const VectorXd& theta) const {
  return theta.size() == D() && theta.allFinite() && theta.cwiseAbs().maxCoeff() <= R;
}

NormalizeMethod NormalizeMethod::automatic(int d) {
  if (d <= kMaxHermiteDimension) return quadrature();
  return monte_carlo(100000, kDefaultNormalizerSeed);
}

MixturePotential MixturePotential::zero(int d) {
  if (d < 1 || d > kMaxDimension) throw std::invalid_argument("MixturePotential: bad dimension");
  return MixturePotential(d);
}

MixturePotential::MixturePotential(GaussianMixtured mixture, double C, VectorXd theta,
                                   std::optional<ParameterBox> box)
    : dim_(mixture.dim()), mixture_(std::move(mixture)), C_(C), theta_(std::move(theta)),
      box_(std::move(box)) {
  if (!std::isfinite(C_)) throw std::invalid_argument("MixturePotential: non-finite C");
}

const GaussianMixtured& MixturePotential::mixture() const {
  if (!mixture_) throw std::logic_error("MixturePotential: the zero potential has no mixture");
  return *mixture_;
}

NormalizerEstimate normalize(const GaussianMixtured& mixture, const OUParamsd& params,
                             const NormalizeMethod& method) {
  require_dim(mixture.dim(), params.dim(), "normalize");
  if (method.kind == NormalizeMethod::Kind::quadrature && params.dim() > kMaxHermiteDimension) {
    throw std::invalid_argument("normalize: quadrature requested for d > 3");
  }
  const auto pts = normalizer_points(params, method);
  VectorXd values(pts.nodes.cols());
  for (Eigen::Index i = 0; i < pts.nodes.cols(); ++i) values(i) = log_mixture_pdf(mixture, pts.nodes.col(i));
  const double mean = pts.weights.dot(values);
  double se = 0.0;
  if (pts.monte_carlo) {
    const double n = static_cast<double>(values.size());
    se = std::sqrt((values.array() - mean).square().sum() / (n - 1.0) / n);
  }
  return {mean, se};
}

GaussianMixtured decode_mixture(const VectorXd& theta, const ParameterBox& box) {
  box.validate();
  require_dim(theta.size(), box.D(), "decode theta");
  const VectorXd weights = floored_weights(softmax_with_pinned_last(theta, box.K), box);
  std::vector<MixtureComponent<double>> comps;
  for (int k = 0; k < box.K; ++k) {
    const MatrixXd factor = decode_factor(theta, box, k);
    MatrixXd cov = factor * factor.transpose();
    comps.push_back({weights(k), GaussianDistd(theta.segment(box.mean_offset(k), box.d), symmetrized(cov))});
  }
  return GaussianMixtured(std::move(comps));
}

MixturePotential decode(const VectorXd& theta, const ParameterBox& box, const OUParamsd& params) {
  return decode(theta, box, params, NormalizeMethod::automatic(box.d));
}

MixturePotential decode(const VectorXd& theta, const ParameterBox& box, const OUParamsd& params,
                        const NormalizeMethod& method) {
  box.validate();
  require_dim(box.d, params.dim(), "decode box dimension");
  if (!box.contains(theta)) throw std::out_of_range("decode: theta outside the parameter box");
  auto mixture = decode_mixture(theta, box);
  const double C = normalize(mixture, params, method).value;
  return MixturePotential(std::move(mixture), C, theta, box);
}

VectorXd encode(const GaussianMixtured& mixture, const ParameterBox& box) {
  box.validate();
  if (static_cast<int>(mixture.size()) != box.K) throw std::invalid_argument("encode: K mismatch");
  require_dim(mixture.dim(), box.d, "encode");
  VectorXd theta(box.D());
  const double spread = 1.0 - box.K * box.w_floor;
  if (box.K > 1) {
    VectorXd s(box.K);
    for (int k = 0; k < box.K; ++k) {
      if (spread <= 0) {
        s(k) = 1.0;
        continue;
      }
      s(k) = (mixture[k].weight - box.w_floor) / spread;
      if (!(s(k) > 0)) throw std::domain_error("encode: weight at or below the floor");
    }
    for (int k = 0; k + 1 < box.K; ++k) theta(k) = std::log(s(k) / s(box.K - 1));
  }
  const double floor = std::sqrt(box.eig_floor);
  for (int k = 0; k < box.K; ++k) {
    theta.segment(box.mean_offset(k), box.d) = mixture[k].dist.mean();
    const MatrixXd factor = mixture[k].dist.llt().matrixL();
    int idx = box.factor_offset(k);
    for (int i = 0; i < box.d; ++i)
      for (int j = 0; j <= i; ++j, ++idx) {
        if (i == j) {
          if (!(factor(i, i) > floor)) throw std::domain_error("encode: covariance factor below floor");
          theta(idx) = std::log(factor(i, i) - floor);
        } else {
          theta(idx) = factor(i, j);
        }
      }
  }
  if (!box.contains(theta)) throw std::out_of_range("encode: encoded theta lies outside the box");
  return theta;
}

MixturePotential from_mixture(const GaussianMixtured& mixture, const OUParamsd& params) {
  const double C = normalize(mixture, params, NormalizeMethod::automatic(params.dim())).value;
  return MixturePotential(mixture, C);
}

double eval_psi(const MixturePotential& p, const VectorXd& x) {
  require_dim(x.size(), p.dim(), "eval_psi");
  if (p.is_zero()) return 0.0;
  return log_mixture_pdf(p.mixture(), x) - p.C();
}

AssumptionBounds assumption_bounds(const MixturePotential& p, const OUParamsd& params) {
  if (p.is_zero()) return {0.0, 0.0};
  const auto& mix = p.mixture();
  const int d = mix.dim();
  const double half_log_2pi = 0.5 * d * std::log(2.0 * std::numbers::pi);

  // ψ ≤ log Σ_k α_k sup φ_k − C.
  std::vector<double> peaks;
  for (const auto& c : mix) peaks.push_back(std::log(c.weight) - half_log_2pi - 0.5 * c.dist.log_det());
  const double m_upper = log_sum_exp(peaks) - p.C();

  // ψ ≥ log α_k φ_k − C for the heaviest component, then
  // ½‖Σ_k^{-1/2}(x − m_k)‖² ≤ ‖Σ_k^{-1}‖‖Σ‖·‖Σ^{-1/2}(x − m)‖² + ‖Σ_k^{-1/2}(m − m_k)‖².
  std::size_t heaviest = 0;
  for (std::size_t k = 1; k < mix.size(); ++k)
    if (mix[k].weight > mix[heaviest].weight) heaviest = k;
  const auto& dom = mix[heaviest];
  const double c_dom = peaks[heaviest] - p.C();
  const MatrixXd id = MatrixXd::Identity(d, d);
  const double inv_norm = spectral_norm_sym(MatrixXd(dom.dist.llt().solve(id)));
  const double sigma_norm = spectral_norm_sym(params.sigma());
  const double offset = dom.dist.mahalanobis_sq(params.m());
  double lambda = 0.5 * inv_norm * sigma_norm;
  double m_lower = -c_dom;
  if (offset > 0.0) {
    lambda *= 2.0;
    m_lower += offset;
  }
  return {lambda, std::max({0.0, m_upper, m_lower})};
}

MatrixXd lipschitz_probe_points(const OUParamsd& params, std::size_t probes, std::uint64_t seed) {
  if (probes < 2) throw std::invalid_argument("lipschitz_probe: need at least 2 probes");
  const auto law = stationary(params);
  auto rng = make_stream(seed, 0);
  const auto n = static_cast<Eigen::Index>(probes);
  MatrixXd pts = sample(law, rng, n);
  std::chi_squared_distribution<double> chi2(3.0);
  for (Eigen::Index j = n / 2; j < n; ++j) {
    const double scale = std::sqrt(3.0 / chi2(rng));
    pts.col(j) = law.mean() + scale * (pts.col(j) - law.mean());
  }
  return pts;
}

double lipschitz_probe(const VectorXd& theta1, const VectorXd& theta2, const ParameterBox& box,
                       const OUParamsd& params, std::size_t probes, std::uint64_t seed) {
  const double dist = (theta1 - theta2).cwiseAbs().maxCoeff();
  if (!(dist > 0)) throw std::invalid_argument("lipschitz_probe: theta1 == theta2");
  const auto p1 = decode(theta1, box, params);
  const auto p2 = decode(theta2, box, params);
  const MatrixXd pts = lipschitz_probe_points(params, probes, seed);
  double best = 0.0;
  for (Eigen::Index j = 0; j < pts.cols(); ++j) {
    const VectorXd x = pts.col(j);
    const double gap = std::abs(eval_psi(p1, x) - eval_psi(p2, x));
    best = std::max(best, gap / ((1.0 + x.squaredNorm()) * dist));
  }
  return best;
}

MixtureThetaGradient::MixtureThetaGradient(const VectorXd& theta, const ParameterBox& box,
                                           const MatrixXd& added_cov)
    : box_(box) {
  box.validate();
  require_dim(theta.size(), box.D(), "MixtureThetaGradient theta");
  require_dim(added_cov.rows(), box.d, "MixtureThetaGradient added covariance");
  softmax_ = softmax_with_pinned_last(theta, box.K);
  const VectorXd weights = floored_weights(softmax_, box);
  const double half_log_2pi = 0.5 * box.d * std::log(2.0 * std::numbers::pi);
  const MatrixXd id = MatrixXd::Identity(box.d, box.d);
  for (int k = 0; k < box.K; ++k) {
    Component c;
    c.log_weight = std::log(weights(k));
    c.mean = theta.segment(box.mean_offset(k), box.d);
    c.factor = decode_factor(theta, box, k);
    const MatrixXd cov = symmetrized(MatrixXd(c.factor * c.factor.transpose() + added_cov));
    c.llt = checked_llt<double>(cov, "MixtureThetaGradient");
    c.cov_inverse = symmetrized(MatrixXd(c.llt.solve(id)));
    c.log_norm = -half_log_2pi - 0.5 * log_det(c.llt);
    components_.push_back(std::move(c));
  }
}

double MixtureThetaGradient::value(const VectorXd& z) const {
  std::vector<double> terms;
  terms.reserve(components_.size());
  for (const auto& c : components_) {
    VectorXd r = z - c.mean;
    c.llt.matrixL().solveInPlace(r);
    terms.push_back(c.log_weight + c.log_norm - 0.5 * r.squaredNorm());
  }
  return log_sum_exp(terms);
}

double MixtureThetaGradient::value_and_grad(const VectorXd& z, Eigen::Ref<VectorXd> grad) const {
  const int K = box_.K;
  const int d = box_.d;
  require_dim(grad.size(), box_.D(), "MixtureThetaGradient grad");
  std::vector<double> terms(K);
  std::vector<VectorXd> deltas(K);
  for (int k = 0; k < K; ++k) {
    const auto& c = components_[k];
    const VectorXd diff = z - c.mean;
    deltas[k] = c.cov_inverse * diff;
    terms[k] = c.log_weight + c.log_norm - 0.5 * diff.dot(deltas[k]);
  }
  const double value = log_sum_exp(terms);
  grad.setZero();

  VectorXd resp(K);
  for (int k = 0; k < K; ++k) resp(k) = std::exp(terms[k] - value);

  if (K > 1) {
    const double spread = 1.0 - K * box_.w_floor;
    VectorXd coef(K);
    for (int k = 0; k < K; ++k) coef(k) = resp(k) / std::exp(components_[k].log_weight) * spread * softmax_(k);
    const double total = coef.sum();
    for (int l = 0; l + 1 < K; ++l) grad(l) = coef(l) - softmax_(l) * total;
  }
  const double floor = std::sqrt(box_.eig_floor);
  for (int k = 0; k < K; ++k) {
    const auto& c = components_[k];
    grad.segment(box_.mean_offset(k), d) = resp(k) * deltas[k];
    const MatrixXd g = 0.5 * resp(k) * (deltas[k] * deltas[k].transpose() - c.cov_inverse);
    const MatrixXd d_factor = 2.0 * g * c.factor;
    int idx = box_.factor_offset(k);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j <= i; ++j, ++idx)
        grad(idx) = (i == j) ? d_factor(i, i) * (c.factor(i, i) - floor) : d_factor(i, j);
  }
  return value;
}

std::pair<double, VectorXd> normalizer_gradient(const VectorXd& theta, const ParameterBox& box,
                                                const OUParamsd& params) {
  const MixtureThetaGradient mtg(theta, box, MatrixXd::Zero(box.d, box.d));
  const auto pts = normalizer_points(params, NormalizeMethod::automatic(box.d));
  double value = 0.0;
  VectorXd grad = VectorXd::Zero(box.D());
  VectorXd g(box.D());
  for (Eigen::Index i = 0; i < pts.nodes.cols(); ++i) {
    value += pts.weights(i) * mtg.value_and_grad(pts.nodes.col(i), g);
    grad += pts.weights(i) * g;
  }
  return {value, grad};
}

std::pair<double, VectorXd> psi_gradient(const VectorXd& theta, const ParameterBox& box,
                                         const OUParamsd& params, const VectorXd& x) {
  const MixtureThetaGradient mtg(theta, box, MatrixXd::Zero(box.d, box.d));
  VectorXd g(box.D());
  const double v = mtg.value_and_grad(x, g);
  auto [C, gC] = normalizer_gradient(theta, box, params);
  return {v - C, g - gC};
}

KeyValues potential_to_key_values(const MixturePotential& p) {
  KeyValues kv;
  kv.set("format", std::string("sbp-potential"));
  kv.set("version", 1);
  kv.set("d", p.dim());
  kv.set("zero", p.is_zero() ? 1 : 0);
  if (p.is_zero()) return kv;
  const auto& mix = p.mixture();
  kv.set("K", static_cast<int>(mix.size()));
  kv.set("C", p.C());
  if (p.box()) {
    kv.set("box.R", p.box()->R);
    kv.set("box.w_floor", p.box()->w_floor);
    kv.set("box.eig_floor", p.box()->eig_floor);
    kv.set("theta", p.theta());
  }
  VectorXd weights(mix.size());
  for (std::size_t k = 0; k < mix.size(); ++k) weights(k) = mix[k].weight;
  kv.set("weights", weights);
  for (std::size_t k = 0; k < mix.size(); ++k) {
    const auto idx = std::to_string(k);
    kv.set("mean." + idx, mix[k].dist.mean());
    kv.set("cov." + idx, format_matrix(mix[k].dist.cov()));
  }
  if (p.bounds()) {
    kv.set("Lambda", p.bounds()->Lambda);
    kv.set("M", p.bounds()->M);
  }
  return kv;
}

MixturePotential potential_from_key_values(const KeyValues& kv, const OUParamsd& params) {
  if (kv.get("format") != "sbp-potential") throw std::invalid_argument("not a potential file");
  if (kv.get_int("version") != 1) throw std::invalid_argument("unsupported potential version");
  const int d = static_cast<int>(kv.get_int("d"));
  require_dim(d, params.dim(), "potential file dimension");
  if (kv.get_int("zero") == 1) return MixturePotential::zero(d);
  const int K = static_cast<int>(kv.get_int("K"));
  auto with_bounds = [&](MixturePotential p) {
    if (kv.has("Lambda")) p.set_bounds({kv.get_double("Lambda"), kv.get_double("M")});
    return p;
  };
  if (kv.has("theta")) {
    ParameterBox box{K, d, kv.get_double("box.R"), kv.get_double("box.w_floor"),
                     kv.get_double("box.eig_floor")};
    return with_bounds(decode(kv.get_vector("theta"), box, params));
  }
  const VectorXd weights = kv.get_vector("weights");
  require_dim(weights.size(), K, "potential file weights");
  std::vector<MixtureComponent<double>> comps;
  for (int k = 0; k < K; ++k) {
    const auto idx = std::to_string(k);
    comps.push_back({weights(k), GaussianDistd(kv.get_vector("mean." + idx),
                                               parse_matrix(kv.get("cov." + idx), d, d))});
  }
  return with_bounds(from_mixture(GaussianMixtured(std::move(comps)), params));
}

}  // namespace sbp
