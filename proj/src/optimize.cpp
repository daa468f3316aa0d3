#include "sbp/optimize.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>

namespace sbp {
namespace {

VectorXd project(const VectorXd& x, const VectorXd& lower, const VectorXd& upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

void check_inputs(const VectorXd& x0, const VectorXd& lower, const VectorXd& upper) {
  if (lower.size() != x0.size() || upper.size() != x0.size())
    throw std::invalid_argument("optimize: bound sizes do not match x0");
  if ((lower.array() > upper.array()).any()) throw std::invalid_argument("optimize: lower > upper");
}

/// Coordinates held at a bound by a gradient pointing out of the box.
Eigen::Array<bool, Eigen::Dynamic, 1> active_set(const VectorXd& x, const VectorXd& g,
                                                 const VectorXd& lower, const VectorXd& upper) {
  return ((x.array() <= lower.array()) && (g.array() > 0)) ||
         ((x.array() >= upper.array()) && (g.array() < 0));
}

}  // namespace

double projected_gradient_norm(const VectorXd& x, const VectorXd& g, const VectorXd& lower,
                               const VectorXd& upper) {
  return (project(x - g, lower, upper) - x).lpNorm<Eigen::Infinity>();
}

OptimizeResult minimize_lbfgs_box(const GradientObjective& f, VectorXd x0, const VectorXd& lower,
                                  const VectorXd& upper, const OptimizeOptions& options) {
  check_inputs(x0, lower, upper);
  VectorXd x = project(x0, lower, upper);
  VectorXd g(x.size());
  double fx = f(x, g);
  if (!std::isfinite(fx)) throw std::runtime_error("lbfgs: objective not finite at start");
  OptimizeResult res{x, fx, {fx}, projected_gradient_norm(x, g, lower, upper), 0, false};
  std::deque<std::pair<VectorXd, VectorXd>> memory;

  for (int iter = 0; iter < options.max_iters; ++iter) {
    if (res.projected_grad_norm < options.grad_tol) {
      res.converged = true;
      break;
    }
    const auto active = active_set(x, g, lower, upper);
    VectorXd q = active.select(0.0, g);

    // Two-loop recursion on the free coordinates.
    std::vector<double> alpha(memory.size());
    for (int i = static_cast<int>(memory.size()) - 1; i >= 0; --i) {
      const auto& [s, y] = memory[i];
      alpha[i] = s.dot(q) / y.dot(s);
      q -= alpha[i] * y;
    }
    if (!memory.empty()) {
      const auto& [s, y] = memory.back();
      q *= s.dot(y) / y.dot(y);
    }
    for (std::size_t i = 0; i < memory.size(); ++i) {
      const auto& [s, y] = memory[i];
      q += (alpha[i] - y.dot(q) / y.dot(s)) * s;
    }
    VectorXd dir = active.select(0.0, -q);
    if (!(dir.dot(g) < 0)) {
      memory.clear();
      dir = active.select(0.0, -g);
    }

    bool accepted = false;
    VectorXd x_new, g_new(x.size());
    double f_new = 0.0;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      double step = (memory.empty() && attempt == 0)
                        ? std::min(1.0, 1.0 / std::max(dir.lpNorm<Eigen::Infinity>(), 1e-12))
                        : 1.0;
      for (int ls = 0; ls < 40; ++ls, step *= 0.5) {
        x_new = project(x + step * dir, lower, upper);
        const double decrease = g.dot(x_new - x);
        if (decrease >= 0) continue;
        f_new = f(x_new, g_new);
        if (std::isfinite(f_new) && f_new <= fx + 1e-4 * decrease) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        // Retry once along steepest descent with a fresh curvature model.
        memory.clear();
        dir = active.select(0.0, -g);
      }
    }
    if (!accepted) break;

    const VectorXd s = x_new - x;
    const VectorXd y = g_new - g;
    if (s.dot(y) > 1e-10 * s.norm() * y.norm()) {
      memory.emplace_back(s, y);
      if (static_cast<int>(memory.size()) > options.memory) memory.pop_front();
    }
    x = x_new;
    g = g_new;
    fx = f_new;
    res.trace.push_back(fx);
    res.iterations = iter + 1;
    res.projected_grad_norm = projected_gradient_norm(x, g, lower, upper);
  }
  if (res.projected_grad_norm < options.grad_tol) res.converged = true;
  res.x = x;
  res.value = fx;
  return res;
}

OptimizeResult minimize_adam_box(const GradientObjective& f, VectorXd x0, const VectorXd& lower,
                                 const VectorXd& upper, const OptimizeOptions& options) {
  check_inputs(x0, lower, upper);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  VectorXd x = project(x0, lower, upper);
  VectorXd g(x.size());
  double fx = f(x, g);
  if (!std::isfinite(fx)) throw std::runtime_error("adam: objective not finite at start");
  OptimizeResult res{x, fx, {fx}, projected_gradient_norm(x, g, lower, upper), 0, false};
  VectorXd m1 = VectorXd::Zero(x.size());
  VectorXd m2 = VectorXd::Zero(x.size());
  for (int iter = 1; iter <= options.max_iters; ++iter) {
    if (projected_gradient_norm(x, g, lower, upper) < options.grad_tol) {
      res.converged = true;
      break;
    }
    m1 = beta1 * m1 + (1 - beta1) * g;
    m2 = beta2 * m2 + (1 - beta2) * g.cwiseAbs2();
    const VectorXd mhat = m1 / (1 - std::pow(beta1, iter));
    const VectorXd vhat = m2 / (1 - std::pow(beta2, iter));
    x = project(x - options.learning_rate * (mhat.array() / (vhat.array().sqrt() + eps)).matrix(),
                lower, upper);
    fx = f(x, g);
    res.iterations = iter;
    if (std::isfinite(fx) && fx < res.value) {
      res.x = x;
      res.value = fx;
      res.trace.push_back(fx);
      res.projected_grad_norm = projected_gradient_norm(x, g, lower, upper);
    }
  }
  return res;
}

}  // namespace sbp
