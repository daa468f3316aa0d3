#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace sbp {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Upper bound on the state dimension. All algorithms are dense.
inline constexpr int kMaxDimension = 16;

/// A strictly positive elapsed time, or the explicit "infinite horizon"
/// sentinel used for the stationary expectation.
class Elapsed {
 public:
  explicit Elapsed(double t) : t_(t) {
    if (!(t > 0.0) || !std::isfinite(t)) {
      throw std::invalid_argument("Elapsed: time must be finite and > 0, got " +
                                  std::to_string(t));
    }
  }

  static Elapsed infinite() { return Elapsed(); }

  bool is_infinite() const { return infinite_; }

  double value() const {
    if (infinite_) throw std::logic_error("Elapsed: value() of the infinite sentinel");
    return t_;
  }

 private:
  Elapsed() : t_(std::numeric_limits<double>::infinity()), infinite_(true) {}

  double t_;
  bool infinite_ = false;
};

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (got " +
                                std::to_string(got) + ", expected " +
                                std::to_string(want) + ")");
  }
}

}  // namespace sbp
