#include "quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "errors.hpp"

namespace dnnh {

QuadratureRule QuadratureRule::GaussLegendre(int order) {
  Require(order >= 1, ErrorKind::kConfig, "quadrature order must be positive");
  const int n = order;
  std::vector<double> x(n), w(n);
  // Newton iteration on P_n from the Chebyshev-like initial guess; roots are
  // symmetric so only half are computed.
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // Recompute derivative at the converged root for the weight.
    double p0 = 1.0, p1 = 0.0;
    for (int k = 1; k <= n; ++k) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
    }
    dp = n * (z * p0 - p1) / (z * z - 1.0);
    const double wi = 2.0 / ((1.0 - z * z) * dp * dp);
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = wi;
    w[n - 1 - i] = wi;
  }
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = 0.5 * (x[i] + 1.0);
    rule.weights[i] = 0.5 * w[i];
  }
  return rule;
}

const QuadratureRule& CachedGaussLegendre(int order) {
  static std::mutex mu;
  static std::map<int, QuadratureRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, QuadratureRule::GaussLegendre(order)).first;
  return it->second;
}

void CompositeNodes(const QuadratureRule& rule, double a, double b, int subintervals,
                    std::vector<double>& nodes, std::vector<double>& weights) {
  Require(subintervals >= 1, ErrorKind::kConfig, "subinterval count must be positive");
  nodes.clear();
  weights.clear();
  const double h = (b - a) / subintervals;
  for (int k = 0; k < subintervals; ++k) {
    const double left = a + k * h;
    for (int j = 0; j < rule.order(); ++j) {
      nodes.push_back(left + h * rule.nodes[j]);
      weights.push_back(h * rule.weights[j]);
    }
  }
}

}  // namespace dnnh
