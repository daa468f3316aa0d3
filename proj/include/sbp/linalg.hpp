#pragma once

#include <stdexcept>

#include <Eigen/Dense>

#include "sbp/types.hpp"

namespace sbp {

/// Relative symmetry check, ‖A − Aᵀ‖_max ≤ tol·max(1, ‖A‖_max).
template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& a, double tol = 1e-12) {
  if (a.rows() != a.cols()) return false;
  using std::abs;
  const auto scale = std::max<typename Derived::RealScalar>(1, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

template <typename Derived>
Matrix<typename Derived::Scalar> symmetrized(const Eigen::MatrixBase<Derived>& a) {
  return (a + a.transpose()) / 2;
}

/// Eigenvalues below this are treated as a failed PD assumption.
inline constexpr double kEigenClamp = 1e-14;

/// Symmetric matrix power A^p for PD A via eigendecomposition. Throws if any
/// eigenvalue falls under the clamp; the result is exactly symmetric.
template <typename Derived>
Matrix<typename Derived::Scalar> sym_pow(const Eigen::MatrixBase<Derived>& a,
                                         typename Derived::Scalar p) {
  using Scalar = typename Derived::Scalar;
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(symmetrized(a));
  if (es.info() != Eigen::Success) throw std::runtime_error("sym_pow: eigensolver failed");
  const auto& ev = es.eigenvalues();
  if (ev.minCoeff() < Scalar(kEigenClamp)) {
    throw std::domain_error("sym_pow: matrix is not positive definite");
  }
  Vector<Scalar> powed = ev.array().pow(p).matrix();
  Matrix<Scalar> out = es.eigenvectors() * powed.asDiagonal() * es.eigenvectors().transpose();
  return symmetrized(out);
}

template <typename Derived>
Matrix<typename Derived::Scalar> sym_sqrt(const Eigen::MatrixBase<Derived>& a) {
  return sym_pow(a, typename Derived::Scalar(0.5));
}

template <typename Derived>
Matrix<typename Derived::Scalar> sym_inv_sqrt(const Eigen::MatrixBase<Derived>& a) {
  return sym_pow(a, typename Derived::Scalar(-0.5));
}

/// Cholesky with a loud failure; no jitter is ever added.
template <typename Scalar>
Eigen::LLT<Matrix<Scalar>> checked_llt(const Matrix<Scalar>& a, const char* what) {
  Eigen::LLT<Matrix<Scalar>> llt(a);
  if (llt.info() != Eigen::Success) {
    throw std::domain_error(std::string(what) + ": matrix is not positive definite");
  }
  return llt;
}

template <typename Scalar>
Scalar log_det(const Eigen::LLT<Matrix<Scalar>>& llt) {
  return Scalar(2) * llt.matrixLLT().diagonal().array().log().sum();
}

/// Largest eigenvalue of a symmetric matrix (spectral norm for PSD input).
template <typename Derived>
typename Derived::Scalar spectral_norm_sym(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(symmetrized(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace sbp
