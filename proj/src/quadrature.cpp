#include "snse/quadrature.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <stdexcept>

namespace snse {
namespace {

// Gauss-Legendre nodes and weights mapped to [0, 1].
template <int N>
void unit_interval_rule(std::vector<double>& x, std::vector<double>& w) {
  using rule = boost::math::quadrature::gauss<double, N>;
  const auto& abscissa = rule::abscissa();
  const auto& weight = rule::weights();
  for (std::size_t i = 0; i < abscissa.size(); ++i) {
    if (abscissa[i] == 0.0) {
      x.push_back(0.5);
      w.push_back(0.5 * weight[i]);
      continue;
    }
    for (double sign : {-1.0, 1.0}) {
      x.push_back(0.5 * (1.0 + sign * abscissa[i]));
      w.push_back(0.5 * weight[i]);
    }
  }
}

void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  switch (n) {
    case 2: unit_interval_rule<2>(x, w); break;
    case 3: unit_interval_rule<3>(x, w); break;
    case 4: unit_interval_rule<4>(x, w); break;
    case 5: unit_interval_rule<5>(x, w); break;
    case 6: unit_interval_rule<6>(x, w); break;
    case 7: unit_interval_rule<7>(x, w); break;
    case 8: unit_interval_rule<8>(x, w); break;
    case 9: unit_interval_rule<9>(x, w); break;
    case 10: unit_interval_rule<10>(x, w); break;
    default: throw std::invalid_argument("unsupported Gauss rule size");
  }
}

}  // namespace

TriangleRule collapsed_gauss_rule(int points_per_axis) {
  std::vector<double> x, w;
  gauss_legendre(points_per_axis, x, w);
  TriangleRule rule;
  rule.degree = 2 * points_per_axis - 2;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) {
      // (s, t) in the unit square -> (s, t (1 - s)), Jacobian 1 - s.
      rule.points.push_back({x[i], x[j] * (1.0 - x[i])});
      rule.weights.push_back(w[i] * w[j] * (1.0 - x[i]));
    }
  }
  return rule;
}

}  // namespace snse
