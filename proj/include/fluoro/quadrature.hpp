#pragma once

#include <vector>

namespace fluoro {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss-Hermite rule for a standard normal variable: sum w_i f(x_i) ~ E[f(X)],
// X ~ N(0,1). Weights sum to 1.
QuadratureRule gauss_hermite_normal(int order);

// Gauss-Legendre rule on [a, b].
QuadratureRule gauss_legendre(int order, double a, double b);

}  // namespace fluoro
