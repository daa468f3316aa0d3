#pragma once

#include <functional>

#include "sbp/gauss.hpp"
#include "sbp/types.hpp"

namespace sbp {

/// Tensorized Gauss–Hermite rule for E f(Z), Z ~ 𝒩(0, I_d): nodes are columns.
struct QuadratureRule {
  MatrixXd nodes;
  VectorXd weights;
};

inline constexpr int kDefaultHermiteOrder = 40;
inline constexpr int kMaxHermiteDimension = 3;

/// Cached, thread-safe. Throws for d > kMaxHermiteDimension.
const QuadratureRule& gauss_hermite_rule(int d, int order = kDefaultHermiteOrder);

/// Nodes of the rule pushed through the affine map of `dist`.
MatrixXd gauss_hermite_nodes(const GaussianDistd& dist, const QuadratureRule& rule);

double gauss_expectation(const GaussianDistd& dist, const std::function<double(const VectorXd&)>& f,
                         int order = kDefaultHermiteOrder);

struct Integral {
  double value;
  double error;
};

/// Adaptive Gauss–Kronrod on [a, b] with a relative tolerance.
Integral integrate_1d(const std::function<double(double)>& f, double a, double b,
                      double rel_tol = 1e-12);

/// Nested adaptive Gauss–Kronrod over a rectangle.
Integral integrate_2d(const std::function<double(double, double)>& f, double ax, double bx,
                      double ay, double by, double rel_tol = 1e-10);

}  // namespace sbp
