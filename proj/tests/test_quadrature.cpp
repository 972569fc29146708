#include <gtest/gtest.h>

#include <cmath>

#include "mmks/quadrature.hpp"

namespace {

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

// ∫ λ0^a λ1^b λ2^c λ3^d over the unit-volume-normalized simplex.
double monomial_exact(int a, int b, int c, int d) {
  return 6.0 * factorial(a) * factorial(b) * factorial(c) * factorial(d) / factorial(a + b + c + d + 3);
}

}  // namespace

TEST(Quadrature, WeightsPositiveAndSumToOne) {
  for (int order : {1, 2, 4}) {
    const auto q = mmks::tet_quadrature(order);
    double s = 0.0;
    for (double w : q.weights) {
      EXPECT_GT(w, 0.0);
      s += w;
    }
    EXPECT_NEAR(s, 1.0, 1e-14);
    for (const auto& p : q.points) EXPECT_NEAR(p[0] + p[1] + p[2] + p[3], 1.0, 1e-14);
  }
}

TEST(Quadrature, ExactOnMonomialsUpToOrder) {
  for (int order : {1, 2, 4}) {
    const auto q = mmks::tet_quadrature(order);
    for (int a = 0; a <= q.order; ++a)
      for (int b = 0; a + b <= q.order; ++b)
        for (int c = 0; a + b + c <= q.order; ++c) {
          double s = 0.0;
          for (std::size_t k = 0; k < q.size(); ++k)
            s += q.weights[k] * std::pow(q.points[k][0], a) * std::pow(q.points[k][1], b) * std::pow(q.points[k][2], c);
          EXPECT_NEAR(s, monomial_exact(a, b, c, 0), 1e-12) << order << ' ' << a << b << c;
        }
  }
}

TEST(Quadrature, RejectsUnsupportedOrder) { EXPECT_THROW(mmks::tet_quadrature(7), mmks::ContractViolation); }

TEST(Quadrature, GaussLegendreIntegratesPolynomials) {
  std::vector<double> x, w;
  mmks::gauss_legendre(5, x, w);
  for (int p = 0; p <= 9; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * std::pow(x[i], p);
    EXPECT_NEAR(s, p % 2 ? 0.0 : 2.0 / (p + 1), 1e-14);
  }
}
