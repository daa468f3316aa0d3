#include "sbp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sbp {

MeanEstimate mean_and_se(const Eigen::Ref<const VectorXd>& values) {
  const auto n = values.size();
  if (n < 2) throw std::invalid_argument("mean_and_se: need at least two values");
  const double mean = values.mean();
  const double var = (values.array() - mean).square().sum() / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double kolmogorov_pvalue(double D, double n_effective) {
  const double root = std::sqrt(n_effective);
  const double lambda = (root + 0.12 + 0.11 / root) * D;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = sign * std::exp(-2.0 * j * j * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16 * std::abs(sum)) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_test_sorted(const std::vector<double>& sorted, const std::vector<double>& cdf_values) {
  if (sorted.empty() || sorted.size() != cdf_values.size()) {
    throw std::invalid_argument("ks_test: sample and CDF sizes differ or are empty");
  }
  const double n = static_cast<double>(sorted.size());
  double D = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double F = cdf_values[i];
    D = std::max({D, (i + 1) / n - F, F - i / n});
  }
  return {D, kolmogorov_pvalue(D, n)};
}

KsResult ks_test(std::vector<double> samples, const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  std::vector<double> F(samples.size());
  std::transform(samples.begin(), samples.end(), F.begin(), cdf);
  return ks_test_sorted(samples, F);
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double D = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    D = std::max(D, std::abs(i / na - j / nb));
  }
  return {D, kolmogorov_pvalue(D, na * nb / (na + nb))};
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw std::invalid_argument("fit_line: need >= 2 paired points");
  const Eigen::Map<const VectorXd> xv(x.data(), static_cast<Eigen::Index>(n));
  const Eigen::Map<const VectorXd> yv(y.data(), static_cast<Eigen::Index>(n));
  const double mx = xv.mean();
  const double my = yv.mean();
  const double sxx = (xv.array() - mx).square().sum();
  if (sxx == 0.0) throw std::invalid_argument("fit_line: x values are all equal");
  const double slope = ((xv.array() - mx) * (yv.array() - my)).sum() / sxx;
  const double intercept = my - slope * mx;
  double se = 0.0;
  if (n > 2) {
    const double rss = (yv.array() - intercept - slope * xv.array()).square().sum();
    se = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
  }
  return {slope, intercept, se};
}

TabulatedCdf::TabulatedCdf(const std::function<double(double)>& log_density, double lo, double hi,
                           int n)
    : lo_(lo), hi_(hi), step_((hi - lo) / n), cdf_(n + 1, 0.0) {
  if (!(hi > lo) || n < 2) throw std::invalid_argument("TabulatedCdf: bad grid");
  std::vector<double> f(n + 1);
  for (int i = 0; i <= n; ++i) f[i] = std::exp(log_density(lo + i * step_));
  for (int i = 1; i <= n; ++i) cdf_[i] = cdf_[i - 1] + 0.5 * step_ * (f[i - 1] + f[i]);
  mass_ = cdf_.back();
  for (double& c : cdf_) c /= mass_;
}

double TabulatedCdf::operator()(double y) const {
  if (y <= lo_) return 0.0;
  if (y >= hi_) return 1.0;
  const double pos = (y - lo_) / step_;
  const auto i = std::min(static_cast<std::size_t>(pos), cdf_.size() - 2);
  const double frac = pos - static_cast<double>(i);
  return cdf_[i] + frac * (cdf_[i + 1] - cdf_[i]);
}

}  // namespace sbp
