#include "sbp/quadrature.hpp"

#include <map>
#include <mutex>
#include <stdexcept>
#include <utility>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace sbp {
namespace {

// Golub–Welsch for the probabilists' Hermite weight e^{−x²/2}.
std::pair<VectorXd, VectorXd> hermite_1d(int order) {
  MatrixXd jacobi = MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(jacobi);
  VectorXd weights = es.eigenvectors().row(0).transpose().array().square();
  weights /= weights.sum();
  return {es.eigenvalues(), weights};
}

QuadratureRule build_rule(int d, int order) {
  const auto [x, w] = hermite_1d(order);
  Eigen::Index total = 1;
  for (int i = 0; i < d; ++i) total *= order;
  QuadratureRule rule{MatrixXd(d, total), VectorXd(total)};
  for (Eigen::Index idx = 0; idx < total; ++idx) {
    Eigen::Index rem = idx;
    double weight = 1.0;
    for (int axis = 0; axis < d; ++axis) {
      const Eigen::Index i = rem % order;
      rem /= order;
      rule.nodes(axis, idx) = x(i);
      weight *= w(i);
    }
    rule.weights(idx) = weight;
  }
  return rule;
}

}  // namespace

const QuadratureRule& gauss_hermite_rule(int d, int order) {
  if (d < 1 || d > kMaxHermiteDimension) {
    throw std::invalid_argument("gauss_hermite_rule: tensor quadrature supports d <= 3");
  }
  if (order < 1) throw std::invalid_argument("gauss_hermite_rule: order must be >= 1");
  static std::mutex mutex;
  static std::map<std::pair<int, int>, QuadratureRule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find({d, order});
  if (it == cache.end()) it = cache.emplace(std::pair{d, order}, build_rule(d, order)).first;
  return it->second;
}

MatrixXd gauss_hermite_nodes(const GaussianDistd& dist, const QuadratureRule& rule) {
  require_dim(rule.nodes.rows(), dist.dim(), "gauss_hermite_nodes");
  MatrixXd out = dist.llt().matrixL() * rule.nodes;
  out.colwise() += dist.mean();
  return out;
}

double gauss_expectation(const GaussianDistd& dist, const std::function<double(const VectorXd&)>& f,
                         int order) {
  const auto& rule = gauss_hermite_rule(dist.dim(), order);
  const MatrixXd nodes = gauss_hermite_nodes(dist, rule);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < nodes.cols(); ++i) acc += rule.weights(i) * f(nodes.col(i));
  return acc;
}

Integral integrate_1d(const std::function<double(double)>& f, double a, double b, double rel_tol) {
  double error = 0.0;
  const double value =
      boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 20, rel_tol, &error);
  return {value, error};
}

Integral integrate_2d(const std::function<double(double, double)>& f, double ax, double bx,
                      double ay, double by, double rel_tol) {
  double inner_error = 0.0;
  auto outer = [&](double x) {
    const auto inner = integrate_1d([&](double y) { return f(x, y); }, ay, by, rel_tol);
    inner_error = std::max(inner_error, inner.error);
    return inner.value;
  };
  const auto result = integrate_1d(outer, ax, bx, rel_tol);
  return {result.value, result.error + inner_error * (bx - ax)};
}

}  // namespace sbp
