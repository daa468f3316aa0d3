#pragma once

#include <functional>
#include <vector>

#include "sbp/types.hpp"

namespace sbp {

/// Objective returning f(x) and writing ∇f(x) into the second argument.
using GradientObjective = std::function<double(const VectorXd&, VectorXd&)>;

struct OptimizeOptions {
  int max_iters = 200;
  /// Stop when the ∞-norm of the projected gradient falls below this.
  double grad_tol = 1e-6;
  int memory = 8;
  /// Adam step size (first-order method only).
  double learning_rate = 0.05;
};

struct OptimizeResult {
  VectorXd x;
  double value;
  /// Objective after each accepted step, starting with the initial point.
  std::vector<double> trace;
  double projected_grad_norm;
  int iterations;
  bool converged;
};

/// ∞-norm of P(x − g) − x for the box [lower, upper].
double projected_gradient_norm(const VectorXd& x, const VectorXd& g, const VectorXd& lower,
                               const VectorXd& upper);

/// Projected limited-memory BFGS with backtracking along the projection arc.
/// The accepted values are nonincreasing.
OptimizeResult minimize_lbfgs_box(const GradientObjective& f, VectorXd x0, const VectorXd& lower,
                                  const VectorXd& upper, const OptimizeOptions& options);

/// Projected Adam. The returned point is the best iterate; the trace records
/// the iterates that improved on it.
OptimizeResult minimize_adam_box(const GradientObjective& f, VectorXd x0, const VectorXd& lower,
                                 const VectorXd& upper, const OptimizeOptions& options);

}  // namespace sbp
