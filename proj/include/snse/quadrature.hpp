#pragma once

#include <array>
#include <vector>

namespace snse {

/// Quadrature on the reference triangle (0,0), (1,0), (0,1); weights sum to
/// its area 1/2.
struct TriangleRule {
  std::vector<std::array<double, 2>> points;
  std::vector<double> weights;
  int degree = 0;  // polynomial degree integrated exactly
};

/// Gauss-Legendre tensor rule pulled back through the Duffy collapse of the
/// square onto the triangle; exact for degree 2 * points_per_axis - 2.
/// Supports 2 <= points_per_axis <= 10.
TriangleRule collapsed_gauss_rule(int points_per_axis);

}  // namespace snse
