#pragma once

#include <vector>

namespace dnnh {

// Gauss-Legendre rule on [0, 1].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  int order() const { return static_cast<int>(nodes.size()); }

  // Q-point rule; exact for polynomials of degree <= 2Q - 1.
  static QuadratureRule GaussLegendre(int order);
};

// Cached rule for small orders (the rules are immutable once built).
const QuadratureRule& CachedGaussLegendre(int order);

// Nodes and weights of the composite rule on [a, b]: `subintervals` equal
// pieces, each carrying the Q-point rule. Weights include the Jacobian.
void CompositeNodes(const QuadratureRule& rule, double a, double b, int subintervals,
                    std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace dnnh
