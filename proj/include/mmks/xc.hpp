#pragma once

// Spin-unpolarized LDA: Slater exchange and Vosko–Wilk–Nusair correlation
// (paramagnetic fit to the Ceperley–Alder data). Atomic units throughout.

#include <atomic>
#include <cmath>
#include <cstddef>
#include <numbers>

namespace mmks::xc {

struct XcEval {
  double v_xc = 0.0;  // potential
  double e_xc = 0.0;  // energy per electron
};

/// Paramagnetic VWN parameters (A in Hartree).
struct VwnParameters {
  double a = 0.0310907;
  double x0 = -0.10498;
  double b = 3.72744;
  double c = 12.9352;
};

inline constexpr VwnParameters kVwnParamagnetic{};

/// Counts densities clamped from negative values.
struct Diagnostics {
  std::atomic<std::size_t> negative_density{0};
};

struct Correlation {
  double e = 0.0;
  double v = 0.0;
};

/// VWN correlation energy per electron and potential at Wigner–Seitz radius rs.
inline Correlation vwn_correlation(double rs, const VwnParameters& p = kVwnParamagnetic) {
  const double x = std::sqrt(rs);
  const double xx = x * x + p.b * x + p.c;
  const double xx0 = p.x0 * p.x0 + p.b * p.x0 + p.c;
  const double q = std::sqrt(4.0 * p.c - p.b * p.b);
  const double at = std::atan(q / (2.0 * x + p.b));
  const double e = p.a * (std::log(x * x / xx) + 2.0 * p.b / q * at -
                          p.b * p.x0 / xx0 * (std::log((x - p.x0) * (x - p.x0) / xx) + 2.0 * (p.b + 2.0 * p.x0) / q * at));
  const double t = 2.0 * x + p.b;
  const double datan = -2.0 * q / (t * t + q * q);  // d/dx atan(q / (2x + b))
  const double de_dx = p.a * (2.0 / x - t / xx + 2.0 * p.b / q * datan -
                              p.b * p.x0 / xx0 * (2.0 / (x - p.x0) - t / xx + 2.0 * (p.b + 2.0 * p.x0) / q * datan));
  // v = e − (rs/3) de/drs,  de/drs = de/dx / (2x)
  return {e, e - x / 6.0 * de_dx};
}

/// LDA exchange-correlation at density rho (negative input is clamped to 0).
inline XcEval eval_lda(double rho, Diagnostics* diag = nullptr) {
  if (rho < 0.0) {
    if (diag) ++diag->negative_density;
    rho = 0.0;
  }
  if (rho == 0.0) return {};
  const double cbrt = std::cbrt(3.0 * rho / std::numbers::pi);
  const double vx = -cbrt;
  const double ex = -0.75 * cbrt;
  const double rs = std::cbrt(3.0 / (4.0 * std::numbers::pi * rho));
  const auto c = vwn_correlation(rs);
  return {vx + c.v, ex + c.e};
}

}  // namespace mmks::xc
