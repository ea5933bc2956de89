#include "stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>

#include "errors.hpp"

namespace dnnh {

namespace {
const boost::math::normal_distribution<double> kStdNormal(0.0, 1.0);
}

double NormalPdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double NormalCdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double NormalSf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

double NormalQuantile(double p) {
  Require(p > 0.0 && p < 1.0, ErrorKind::kDomain, "normal quantile needs p in (0,1)");
  return boost::math::quantile(kStdNormal, p);
}

double InverseMillsRatio(double z) {
  if (z < 8.0) return NormalPdf(z) / NormalSf(z);
  // Asymptotic expansion of phi/Phi^c.
  const double z2 = z * z;
  return z + 1.0 / z - 2.0 / (z * z2) + 10.0 / (z * z2 * z2);
}

double TwoSidedPValue(double z) {
  if (!std::isfinite(z)) return 0.0;
  return std::min(1.0, 2.0 * NormalSf(std::abs(z)));
}

double CriticalValue(double alpha) {
  Require(alpha > 0.0 && alpha < 1.0, ErrorKind::kConfig, "alpha must be in (0,1)");
  return NormalQuantile(1.0 - alpha / 2.0);
}

Interval ClopperPearson(std::size_t k, std::size_t n, double level) {
  Require(n > 0, ErrorKind::kDomain, "binomial interval needs at least one trial");
  Require(k <= n, ErrorKind::kDomain, "successes exceed trials");
  const double a = 1.0 - level;
  Interval ci;
  const double kd = static_cast<double>(k), nd = static_cast<double>(n);
  ci.lo = k == 0 ? 0.0
                 : boost::math::quantile(boost::math::beta_distribution<double>(kd, nd - kd + 1.0),
                                         a / 2.0);
  ci.hi = k == n ? 1.0
                 : boost::math::quantile(boost::math::beta_distribution<double>(kd + 1.0, nd - kd),
                                         1.0 - a / 2.0);
  return ci;
}

double KolmogorovDistance(std::vector<double> sample, const std::function<double(double)>& cdf) {
  Require(!sample.empty(), ErrorKind::kDomain, "empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

double KolmogorovDistance2(std::vector<double> a, std::vector<double> b) {
  Require(!a.empty() && !b.empty(), ErrorKind::kDomain, "empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double t = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= t) ++i;
    while (j < b.size() && b[j] <= t) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return d;
}

double Mean(std::span<const double> v) {
  Require(!v.empty(), ErrorKind::kDomain, "mean of empty sequence");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double Median(std::vector<double> v) { return Quantile(std::move(v), 0.5); }

double SampleSd(std::span<const double> v) {
  Require(v.size() >= 2, ErrorKind::kDomain, "standard deviation needs two values");
  const double m = Mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double Quantile(std::vector<double> v, double q) {
  Require(!v.empty(), ErrorKind::kDomain, "quantile of empty sequence");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

}  // namespace dnnh
