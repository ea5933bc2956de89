#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace dnnh {

double NormalPdf(double z);
double NormalCdf(double z);
// Upper tail 1 - Phi(z), accurate for large z.
double NormalSf(double z);
double NormalQuantile(double p);
// phi(z) / (1 - Phi(z)), stable for large z.
double InverseMillsRatio(double z);

// Two-sided p-value 2 (1 - Phi(|z|)).
double TwoSidedPValue(double z);
// z_{alpha/2}: the 1 - alpha/2 normal quantile.
double CriticalValue(double alpha);

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

// Exact (Clopper-Pearson) interval for a binomial proportion.
Interval ClopperPearson(std::size_t successes, std::size_t trials, double level = 0.95);

// sup_t |F_n(t) - F(t)| for a sample against a continuous CDF.
double KolmogorovDistance(std::vector<double> sample, const std::function<double(double)>& cdf);
// Two-sample Kolmogorov-Smirnov distance.
double KolmogorovDistance2(std::vector<double> a, std::vector<double> b);

double Mean(std::span<const double> v);
double Median(std::vector<double> v);
double SampleSd(std::span<const double> v);
double Quantile(std::vector<double> v, double q);

}  // namespace dnnh
