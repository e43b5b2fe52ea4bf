#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gat::quad {

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss-Legendre rule on [-1, 1].
Rule gauss_legendre(std::size_t order);

// Cumulative trapezoid integral of `values` over abscissae `xs`; result[0] = 0.
std::vector<double> cumulative_trapezoid(std::span<const double> xs, std::span<const double> values);

}  // namespace gat::quad
