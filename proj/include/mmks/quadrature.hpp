#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "mmks/error.hpp"

namespace mmks {

/// Quadrature on the reference tetrahedron in barycentric form; weights sum to 1
/// (multiply by the element volume).
struct Quadrature {
  int order = 0;
  std::vector<std::array<double, 4>> points;
  std::vector<double> weights;

  std::size_t size() const { return points.size(); }
};

namespace quadrature_detail {

inline void add_orbit_4(Quadrature& q, double a, double w) {
  const double b = 1.0 - 3.0 * a;
  q.points.push_back({b, a, a, a});
  q.points.push_back({a, b, a, a});
  q.points.push_back({a, a, b, a});
  q.points.push_back({a, a, a, b});
  for (int i = 0; i < 4; ++i) q.weights.push_back(w);
}

inline void add_orbit_6(Quadrature& q, double a, double w) {
  const double b = 0.5 - a;
  q.points.push_back({a, a, b, b});
  q.points.push_back({a, b, a, b});
  q.points.push_back({a, b, b, a});
  q.points.push_back({b, a, a, b});
  q.points.push_back({b, a, b, a});
  q.points.push_back({b, b, a, a});
  for (int i = 0; i < 6; ++i) q.weights.push_back(w);
}

}  // namespace quadrature_detail

/// Symmetric tetrahedral rules with positive weights. Requested orders above 2
/// return the 14-point degree-5 rule.
inline Quadrature tet_quadrature(int order) {
  using namespace quadrature_detail;
  Quadrature q;
  if (order <= 1) {
    q.order = 1;
    q.points.push_back({0.25, 0.25, 0.25, 0.25});
    q.weights.push_back(1.0);
  } else if (order == 2) {
    q.order = 2;
    add_orbit_4(q, 0.1381966011250105, 0.25);
  } else {
    MMKS_REQUIRE(order <= 5, "tet_quadrature: orders above 5 are not provided");
    q.order = 5;
    add_orbit_6(q, 0.0455037041256496, 6.0 * 0.007091003462846911);
    add_orbit_4(q, 0.0927352503108912, 6.0 * 0.01224884051939366);
    add_orbit_4(q, 0.3108859192633006, 6.0 * 0.01878132095300264);
  }
  return q;
}

/// Gauss–Legendre nodes and weights on [-1, 1].
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  MMKS_REQUIRE(n >= 1, "gauss_legendre: need at least one node");
  x.assign(static_cast<std::size_t>(n), 0.0);
  w.assign(static_cast<std::size_t>(n), 0.0);
  const double pi = std::acos(-1.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) < 1e-15) break;
    }
    x[static_cast<std::size_t>(i)] = -z;
    x[static_cast<std::size_t>(n - 1 - i)] = z;
    w[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(n - 1 - i)] = 2.0 / ((1.0 - z * z) * pp * pp);
  }
}

}  // namespace mmks
