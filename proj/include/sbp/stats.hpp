#pragma once

#include <functional>
#include <vector>

#include "sbp/types.hpp"

namespace sbp {

struct MeanEstimate {
  double mean;
  double std_error;
};

/// Sample mean with the standard error of the mean.
MeanEstimate mean_and_se(const Eigen::Ref<const VectorXd>& values);

double median(std::vector<double> values);

/// Asymptotic Kolmogorov p-value for statistic D with effective size n,
/// using the Stephens small-sample correction.
double kolmogorov_pvalue(double D, double n_effective);

struct KsResult {
  double statistic;
  double p_value;
};

/// One-sample KS test; `cdf` is evaluated at the sorted samples.
KsResult ks_test(std::vector<double> samples, const std::function<double(double)>& cdf);
/// Same, with the CDF already evaluated at the ascending-sorted samples.
KsResult ks_test_sorted(const std::vector<double>& sorted, const std::vector<double>& cdf_values);
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

/// Ordinary least-squares line y = intercept + slope·x.
struct LineFit {
  double slope;
  double intercept;
  double slope_se;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// Tabulated 1D density with its trapezoid-integrated CDF and linear interpolation.
class TabulatedCdf {
 public:
  /// `log_density` evaluated on n+1 equally spaced points in [lo, hi].
  TabulatedCdf(const std::function<double(double)>& log_density, double lo, double hi, int n);
  double operator()(double y) const;
  /// Total mass before renormalization.
  double mass() const { return mass_; }

 private:
  double lo_, hi_, step_;
  std::vector<double> cdf_;
  double mass_;
};

}  // namespace sbp
