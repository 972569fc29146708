#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mmks/xc.hpp"

using namespace mmks;

namespace {

// Second, independent coding of the VWN paramagnetic correlation energy from
// the published form ε = A[ln(x²/X(x)) + 2b/Q·atan(Q/(2x+b)) − b·x0/X(x0)·(ln((x−x0)²/X(x)) + 2(b+2x0)/Q·atan(Q/(2x+b)))],
// in long double, with the potential from a Richardson-extrapolated derivative.
long double oracle_ec(long double rs) {
  const long double A = 0.0621814L / 2.0L, x0 = -0.10498L, b = 3.72744L, c = 12.9352L;
  auto X = [&](long double y) { return y * y + b * y + c; };
  const long double Q = std::sqrt(4.0L * c - b * b);
  const long double x = std::sqrt(rs);
  const long double atn = std::atan(Q / (2.0L * x + b));
  return A * (std::log(x * x / X(x)) + 2.0L * b / Q * atn -
              b * x0 / X(x0) * (std::log((x - x0) * (x - x0) / X(x)) + 2.0L * (b + 2.0L * x0) / Q * atn));
}

long double oracle_vc(long double rs) {
  auto d = [&](long double h) { return (oracle_ec(rs + h) - oracle_ec(rs - h)) / (2.0L * h); };
  const long double h = 1e-4L * rs;
  const long double deriv = (4.0L * d(h / 2.0L) - d(h)) / 3.0L;
  return oracle_ec(rs) - rs / 3.0L * deriv;
}

}  // namespace

TEST(Xc, ExchangeIdentity) {
  // at rho = π/3 the exchange potential is exactly −1
  const double rho = std::numbers::pi / 3.0;
  const auto c = xc::vwn_correlation(std::cbrt(3.0 / (4.0 * std::numbers::pi * rho)));
  EXPECT_NEAR(xc::eval_lda(rho).v_xc - c.v, -1.0, 1e-14);
  EXPECT_NEAR(xc::eval_lda(rho).e_xc - c.e, -0.75, 1e-14);
}

TEST(Xc, ZeroDensity) {
  const auto r = xc::eval_lda(0.0);
  EXPECT_EQ(r.v_xc, 0.0);
  EXPECT_EQ(r.e_xc, 0.0);
}

TEST(Xc, NegativeDensityClampedAndCounted) {
  xc::Diagnostics d;
  const auto r = xc::eval_lda(-1e-3, &d);
  EXPECT_EQ(r.v_xc, 0.0);
  EXPECT_EQ(d.negative_density.load(), 1u);
}

TEST(Xc, CorrelationMatchesIndependentOracle) {
  for (double rs : {0.5, 1.0, 5.0}) {
    const auto c = xc::vwn_correlation(rs);
    EXPECT_NEAR(c.e, static_cast<double>(oracle_ec(rs)), 1e-10);
    EXPECT_NEAR(c.v, static_cast<double>(oracle_vc(rs)), 1e-10);
  }
  // textbook magnitude: ε_c(rs = 1) ≈ −0.060 Hartree
  EXPECT_NEAR(xc::vwn_correlation(1.0).e, -0.060, 1e-3);
}

TEST(Xc, PotentialIsDerivativeOfEnergyDensity) {
  for (double lr = -6.0; lr <= 2.0; lr += 0.25) {
    const double rho = std::pow(10.0, lr);
    const double h = 1e-5 * rho;
    auto f = [](double r) { return r * xc::eval_lda(r).e_xc; };
    const double fd = (f(rho + h) - f(rho - h)) / (2.0 * h);
    const double v = xc::eval_lda(rho).v_xc;
    EXPECT_NEAR(fd, v, 1e-6 * std::abs(v)) << rho;
  }
}

TEST(Xc, SignsAndMonotonicity) {
  double prev = 0.0;
  for (double lr = -8.0; lr <= 3.0; lr += 0.5) {
    const double rho = std::pow(10.0, lr);
    const auto r = xc::eval_lda(rho);
    EXPECT_LT(r.v_xc, 0.0);
    EXPECT_LT(r.e_xc, 0.0);
    const double vx = -std::cbrt(3.0 * rho / std::numbers::pi);
    EXPECT_LT(vx, prev);
    prev = vx;
  }
}
