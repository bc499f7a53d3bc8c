#pragma once

#include <vector>

namespace debye::quad {

struct Rule {
  std::vector<double> x;
  std::vector<double> w;
};

// Gauss-Legendre nodes and weights on [-1, 1], ascending.
Rule gauss_legendre(int n);

// Same rule mapped to [a, b].
Rule gauss_legendre(int n, double a, double b);

}  // namespace debye::quad
