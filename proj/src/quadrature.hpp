#pragma once

// Thin wrappers over Boost.Math adaptive Gauss-Kronrod used across modules.

#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace kfp::detail {

struct QuadResult {
  double value = 0.0;
  double error = 0.0;
};

template <class F>
QuadResult integrate(F f, double lo, double hi, double tol = 1e-13) {
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      f, lo, hi, 18, tol, &err);
  return {v, std::abs(err)};
}

template <class F>
QuadResult integrate_line(F f, double tol = 1e-13) {
  const double inf = std::numeric_limits<double>::infinity();
  return integrate(f, -inf, inf, tol);
}

template <class F>
QuadResult integrate_half_line(F f, double lo, double tol = 1e-13) {
  return integrate(f, lo, std::numeric_limits<double>::infinity(), tol);
}

// Composite 20-point Gauss-Legendre nodes and weights on [lo, hi].
inline void composite_gauss(double lo, double hi, int panels, std::vector<double>& nodes,
                            std::vector<double>& weights) {
  using rule = boost::math::quadrature::gauss<double, 20>;
  const auto& a = rule::abscissa();
  const auto& w = rule::weights();
  nodes.clear();
  weights.clear();
  const double width = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const double mid = lo + (p + 0.5) * width;
    const double half = 0.5 * width;
    for (std::size_t k = 0; k < a.size(); ++k) {
      // The Boost table stores the non-negative half of a symmetric rule.
      if (a[k] == 0.0) {
        nodes.push_back(mid);
        weights.push_back(w[k] * half);
      } else {
        nodes.push_back(mid - a[k] * half);
        weights.push_back(w[k] * half);
        nodes.push_back(mid + a[k] * half);
        weights.push_back(w[k] * half);
      }
    }
  }
}

}  // namespace kfp::detail
