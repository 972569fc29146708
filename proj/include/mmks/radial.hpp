#pragma once

// One-dimensional radial tools: linear interpolation of hydrogen radial
// orbitals on uniform and error-equidistributed meshes, and a spherical
// LDA atom solver (Numerov shooting on a logarithmic grid).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mmks/error.hpp"
#include "mmks/quadrature.hpp"
#include "mmks/xc.hpp"

namespace mmks::radial {

enum class Orbital { S1, S2, P2 };

inline const char* label(Orbital o) {
  switch (o) {
    case Orbital::S1: return "1s";
    case Orbital::S2: return "2s";
    case Orbital::P2: return "2p";
  }
  return "?";
}

/// Hydrogen radial functions u(r) = r R(r) in the form used for the
/// interpolation study (the 2s function is taken verbatim, without the usual
/// 1/√2 factor).
inline double evaluate(Orbital o, double r) {
  switch (o) {
    case Orbital::S1: return 2.0 * r * std::exp(-r);
    case Orbital::S2: return 0.5 * r * std::exp(-0.5 * r) * (1.0 - 0.5 * r);
    case Orbital::P2: return r * r / (2.0 * std::sqrt(6.0)) * std::exp(-0.5 * r);
  }
  return 0.0;
}

using Function = std::function<double(double)>;

inline Function function_of(Orbital o) {
  return [o](double r) { return evaluate(o, r); };
}

inline void require_sorted(std::span<const double> pts) {
  MMKS_REQUIRE(pts.size() >= 2, "radial mesh needs at least two points");
  for (std::size_t i = 1; i < pts.size(); ++i) MMKS_REQUIRE(pts[i] > pts[i - 1], "radial mesh points must be strictly ascending");
}

/// Squared L2 error of the linear interpolant on each interval (Gauss, 6 points).
inline std::vector<double> interval_errors2(const Function& f, std::span<const double> pts) {
  require_sorted(pts);
  std::vector<double> gx, gw;
  gauss_legendre(6, gx, gw);
  std::vector<double> e(pts.size() - 1, 0.0);
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double a = pts[i], b = pts[i + 1];
    const double fa = f(a), fb = f(b);
    double s = 0.0;
    for (std::size_t q = 0; q < gx.size(); ++q) {
      const double t = 0.5 * (gx[q] + 1.0);
      const double x = a + t * (b - a);
      const double d = f(x) - ((1.0 - t) * fa + t * fb);
      s += gw[q] * d * d;
    }
    e[i] = 0.5 * (b - a) * s;
  }
  return e;
}

/// L2 norm of f minus its piecewise-linear interpolant on the mesh.
inline double interp_l2_error(const Function& f, std::span<const double> pts) {
  double s = 0.0;
  for (double e : interval_errors2(f, pts)) s += e;
  return std::sqrt(s);
}

inline double interp_l2_error(Orbital o, std::span<const double> pts) { return interp_l2_error(function_of(o), pts); }

inline std::vector<double> uniform_mesh(double r_max, std::size_t n_points) {
  MMKS_REQUIRE(n_points >= 2, "uniform_mesh: need at least two points");
  std::vector<double> p(n_points);
  for (std::size_t i = 0; i < n_points; ++i) p[i] = r_max * static_cast<double>(i) / static_cast<double>(n_points - 1);
  return p;
}

struct EquidistributedMesh {
  std::vector<double> points;
  bool converged = false;
  int sweeps = 0;
  double ratio = 0.0;  // max / min interval error
};

/// De Boor-style equidistribution of the summed squared interpolation error of
/// several functions over [0, r_max] with n points.
inline EquidistributedMesh equidistribute(const std::vector<Function>& fs, std::size_t n_points, double r_max = 30.0,
                                          double target_ratio = 1.2, int max_sweeps = 200) {
  MMKS_REQUIRE(n_points >= 3, "equidistribute: need at least three points");
  MMKS_REQUIRE(!fs.empty(), "equidistribute: no functions");
  EquidistributedMesh out;
  std::vector<double> pts = uniform_mesh(r_max, n_points);
  const std::size_t m = n_points - 1;
  auto errors = [&](const std::vector<double>& p) {
    std::vector<double> e(m, 0.0);
    for (const auto& f : fs) {
      const auto ef = interval_errors2(f, p);
      for (std::size_t i = 0; i < m; ++i) e[i] += ef[i];
    }
    for (auto& x : e) x = std::sqrt(x);
    return e;
  };
  double best_ratio = std::numeric_limits<double>::infinity();
  std::vector<double> best = pts;
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    const auto e = errors(pts);
    const double emax = *std::max_element(e.begin(), e.end());
    const double emin = std::max(*std::min_element(e.begin(), e.end()), 1e-300);
    const double ratio = emax / emin;
    if (ratio < best_ratio) {
      best_ratio = ratio;
      best = pts;
    }
    out.sweeps = sweep;
    if (ratio <= target_ratio) {
      out.converged = true;
      break;
    }
    // Monitor density: e_i ≈ C h_i^{5/2} |f''|, so (e_i² / h_i⁵)^{1/5} ∝ |f''|^{2/5}.
    std::vector<double> mon(m);
    double mmax = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double h = pts[i + 1] - pts[i];
      mon[i] = std::pow(e[i] * e[i] / std::pow(h, 5.0), 0.2);
      mmax = std::max(mmax, mon[i]);
    }
    std::vector<double> cum(m + 1, 0.0);
    for (std::size_t i = 0; i < m; ++i) cum[i + 1] = cum[i] + std::max(mon[i], 1e-6 * mmax) * (pts[i + 1] - pts[i]);
    std::vector<double> next(n_points);
    next[0] = 0.0;
    next[m] = r_max;
    std::size_t j = 0;
    for (std::size_t k = 1; k < m; ++k) {
      const double target = cum[m] * static_cast<double>(k) / static_cast<double>(m);
      while (j + 1 < m && cum[j + 1] < target) ++j;
      const double t = (target - cum[j]) / (cum[j + 1] - cum[j]);
      next[k] = pts[j] + t * (pts[j + 1] - pts[j]);
    }
    for (std::size_t k = 1; k < m; ++k) pts[k] = 0.5 * (pts[k] + next[k]);
  }
  out.points = out.converged ? pts : best;
  out.ratio = out.converged ? 0.0 : best_ratio;
  if (out.converged) {
    const auto e = errors(out.points);
    out.ratio = *std::max_element(e.begin(), e.end()) / *std::min_element(e.begin(), e.end());
  }
  return out;
}

inline EquidistributedMesh equidistribute(std::span<const Orbital> orbitals, std::size_t n_points, double r_max = 30.0) {
  std::vector<Function> fs;
  for (auto o : orbitals) fs.push_back(function_of(o));
  return equidistribute(fs, n_points, r_max);
}

// ---------------------------------------------------------------------------
// Spherical LDA atom.

struct Shell {
  int n = 1;
  int l = 0;
  double occupation = 0.0;
};

struct AtomResult {
  std::vector<Shell> shells;
  std::vector<double> eigenvalues;  // per shell
  double total_energy = 0.0;
  int scf_iterations = 0;
  std::vector<double> r;          // grid
  std::vector<double> v_eff;      // −Z/r + v_H + v_xc on the grid
  std::vector<double> density4pi;  // 4π r² ρ(r) on the grid
};

/// Aufbau shells for a neutral or ionic closed/open-shell configuration of
/// N electrons (1s 2s 2p 3s 3p), plus `extra_empty` unoccupied shells.
inline std::vector<Shell> aufbau(int n_electrons, int extra_empty = 1) {
  static const std::vector<std::pair<int, int>> order{{1, 0}, {2, 0}, {2, 1}, {3, 0}, {3, 1}, {3, 2}, {4, 0}};
  std::vector<Shell> out;
  int left = n_electrons;
  int empty = 0;
  for (const auto& [n, l] : order) {
    const int cap = 2 * (2 * l + 1);
    if (left > 0) {
      const int f = std::min(cap, left);
      out.push_back({n, l, static_cast<double>(f)});
      left -= f;
    } else if (empty < extra_empty) {
      out.push_back({n, l, 0.0});
      ++empty;
    } else {
      break;
    }
  }
  MMKS_REQUIRE(left == 0, "aufbau: too many electrons for the built-in shell table");
  return out;
}

namespace detail {

struct LogGrid {
  double x0 = 0.0;
  double h = 0.0;
  std::vector<double> r;
};

inline LogGrid make_grid(double z, double r_max, double h) {
  LogGrid g;
  g.h = h;
  const double r_min = 1e-7 / z;
  g.x0 = std::log(r_min);
  const auto n = static_cast<std::size_t>(std::ceil((std::log(r_max) - g.x0) / h)) + 1;
  g.r.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.r[i] = std::exp(g.x0 + h * static_cast<double>(i));
  return g;
}

// w'' = q(x) w with u = sqrt(r) w, q = 2 r² (V − ε) + (l + ½)².
inline void numerov_q(const LogGrid& g, const std::vector<double>& v, int l, double e, std::vector<double>& q) {
  q.resize(g.r.size());
  const double l2 = (l + 0.5) * (l + 0.5);
  for (std::size_t i = 0; i < g.r.size(); ++i) q[i] = 2.0 * g.r[i] * g.r[i] * (v[i] - e) + l2;
}

/// Nodes of the outward solution on (0, r_max].
inline int count_nodes(const LogGrid& g, const std::vector<double>& v, int l, double e) {
  std::vector<double> q;
  numerov_q(g, v, l, e, q);
  const double h2 = g.h * g.h / 12.0;
  double w0 = std::pow(g.r[0], l + 0.5), w1 = std::pow(g.r[1], l + 0.5);
  int nodes = 0;
  for (std::size_t i = 1; i + 1 < g.r.size(); ++i) {
    const double w2 = (2.0 * w1 * (1.0 + 5.0 * h2 * q[i]) - w0 * (1.0 - h2 * q[i - 1])) / (1.0 - h2 * q[i + 1]);
    if ((w2 < 0.0) != (w1 < 0.0) && w2 != 0.0) ++nodes;
    w0 = w1;
    w1 = w2;
    if (std::abs(w1) > 1e200) {
      w0 *= 1e-200;
      w1 *= 1e-200;
    }
  }
  return nodes;
}

/// Eigenvalue with `k` nodes (Dirichlet at r_max) by bisection on the node count.
inline double find_eigenvalue(const LogGrid& g, const std::vector<double>& v, int l, int k, double lo, double hi) {
  while (count_nodes(g, v, l, lo) > k) lo = 2.0 * lo - 1.0;
  while (count_nodes(g, v, l, hi) <= k) hi += 1.0 + std::abs(hi);
  for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (count_nodes(g, v, l, mid) <= k) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Normalized u(r) on the grid: outward and inward Numerov matched at the
/// outermost classical turning point.
inline std::vector<double> eigenfunction(const LogGrid& g, const std::vector<double>& v, int l, double e) {
  std::vector<double> q;
  numerov_q(g, v, l, e, q);
  const std::size_t n = g.r.size();
  const double h2 = g.h * g.h / 12.0;
  std::size_t tp = n / 2;
  for (std::size_t i = n - 2; i > 1; --i)
    if (q[i] < 0.0) {
      tp = i;
      break;
    }
  tp = std::clamp<std::size_t>(tp, 2, n - 3);
  std::vector<double> w(n, 0.0);
  w[0] = std::pow(g.r[0], l + 0.5);
  w[1] = std::pow(g.r[1], l + 0.5);
  for (std::size_t i = 1; i < tp; ++i)
    w[i + 1] = (2.0 * w[i] * (1.0 + 5.0 * h2 * q[i]) - w[i - 1] * (1.0 - h2 * q[i - 1])) / (1.0 - h2 * q[i + 1]);
  const double w_out = w[tp];
  std::vector<double> win(n, 0.0);
  win[n - 1] = 0.0;
  win[n - 2] = 1e-30;
  for (std::size_t i = n - 2; i > tp; --i) {
    win[i - 1] = (2.0 * win[i] * (1.0 + 5.0 * h2 * q[i]) - win[i + 1] * (1.0 - h2 * q[i + 1])) / (1.0 - h2 * q[i - 1]);
    if (std::abs(win[i - 1]) > 1e200)
      for (std::size_t j = i - 1; j < n; ++j) win[j] *= 1e-200;
  }
  const double scale = w_out / win[tp];
  for (std::size_t i = tp + 1; i < n; ++i) w[i] = win[i] * scale;
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = std::sqrt(g.r[i]) * w[i];
  // ∫ u² dr = ∫ u² r dx (Simpson on the uniform x grid)
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = (i == 0 || i == n - 1) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += c * u[i] * u[i] * g.r[i];
  }
  s *= g.h / 3.0;
  const double inv = 1.0 / std::sqrt(s);
  for (auto& x : u) x *= inv;
  return u;
}

/// Integral of f over x on the uniform grid, cumulative (trapezoid).
inline std::vector<double> cumulative(const LogGrid& g, const std::vector<double>& f) {
  std::vector<double> c(f.size(), 0.0);
  for (std::size_t i = 1; i < f.size(); ++i) c[i] = c[i - 1] + 0.5 * g.h * (f[i] + f[i - 1]);
  return c;
}

}  // namespace detail

struct AtomOptions {
  double r_max = 50.0;
  double h = 0.004;
  double mixing = 0.4;
  double tol = 1e-10;
  int max_iterations = 300;
  bool interacting = true;  // false: bare −Z/r (hydrogenic levels)
  int extra_empty = 1;
};

/// Self-consistent spherical LDA for nuclear charge z and n_electrons.
inline AtomResult radial_lda_solve(double z, int n_electrons, const AtomOptions& opt = {}) {
  MMKS_REQUIRE(z > 0.0 && n_electrons >= 1, "radial_lda_solve: need Z > 0 and at least one electron");
  const auto g = detail::make_grid(z, opt.r_max, opt.h);
  const std::size_t n = g.r.size();
  AtomResult res;
  res.shells = aufbau(n_electrons, opt.extra_empty);
  res.r = g.r;
  std::vector<double> v(n), vh(n, 0.0), vxc(n, 0.0), rho4(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i] = -z / g.r[i];
  std::vector<double> eps(res.shells.size(), 0.0);
  std::vector<std::vector<double>> u(res.shells.size());

  auto solve_shells = [&](const std::vector<double>& pot) {
    for (std::size_t s = 0; s < res.shells.size(); ++s) {
      const auto& sh = res.shells[s];
      const int k = sh.n - sh.l - 1;
      eps[s] = detail::find_eigenvalue(g, pot, sh.l, k, -z * z, 0.0);
      u[s] = detail::eigenfunction(g, pot, sh.l, eps[s]);
    }
  };

  double e_prev = 0.0;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    solve_shells(v);
    res.scf_iterations = it;
    if (!opt.interacting) break;
    // density 4πr²ρ = Σ f u²
    std::vector<double> new_rho(n, 0.0);
    for (std::size_t s = 0; s < res.shells.size(); ++s)
      for (std::size_t i = 0; i < n; ++i) new_rho[i] += res.shells[s].occupation * u[s][i] * u[s][i];
    if (it == 1) {
      rho4 = new_rho;
    } else {
      for (std::size_t i = 0; i < n; ++i) rho4[i] = (1.0 - opt.mixing) * rho4[i] + opt.mixing * new_rho[i];
    }
    // v_H(r) = q(r)/r + ∫_r^∞ 4πr'ρ dr'; with dr = r dx.
    std::vector<double> fq(n), fo(n);
    for (std::size_t i = 0; i < n; ++i) {
      fq[i] = rho4[i] * g.r[i];
      fo[i] = rho4[i];
    }
    const auto qin = detail::cumulative(g, fq);
    const auto oin = detail::cumulative(g, fo);
    for (std::size_t i = 0; i < n; ++i) {
      vh[i] = qin[i] / g.r[i] + (oin[n - 1] - oin[i]);
      const double rho = rho4[i] / (4.0 * std::numbers::pi * g.r[i] * g.r[i]);
      vxc[i] = xc::eval_lda(rho).v_xc;
      v[i] = -z / g.r[i] + vh[i] + vxc[i];
    }
    double esum = 0.0;
    for (std::size_t s = 0; s < res.shells.size(); ++s) esum += res.shells[s].occupation * eps[s];
    if (it > 2 && std::abs(esum - e_prev) < opt.tol) break;
    e_prev = esum;
  }
  MMKS_REQUIRE(!opt.interacting || res.scf_iterations < opt.max_iterations, "radial_lda_solve: SCF did not converge");

  res.eigenvalues = eps;
  res.v_eff = v;
  // Final density from the last orbitals and energies.
  std::vector<double> rho_out(n, 0.0);
  for (std::size_t s = 0; s < res.shells.size(); ++s)
    for (std::size_t i = 0; i < n; ++i) rho_out[i] += res.shells[s].occupation * u[s][i] * u[s][i];
  res.density4pi = rho_out;
  double band = 0.0;
  for (std::size_t s = 0; s < res.shells.size(); ++s) band += res.shells[s].occupation * eps[s];
  if (!opt.interacting) {
    res.total_energy = band;
    return res;
  }
  // E = Σ f ε − ½∫ v_H ρ + ∫ ρ (e_xc − v_xc), using the potential the orbitals were computed in.
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double rho = rho4[i] / (4.0 * std::numbers::pi * g.r[i] * g.r[i]);
    const auto x = xc::eval_lda(rho);
    f[i] = rho_out[i] * g.r[i] * (-0.5 * vh[i] + (x.e_xc - x.v_xc));
  }
  // Correction for the input/output density mismatch is below tol at convergence.
  const auto c = detail::cumulative(g, f);
  res.total_energy = band + c[n - 1];
  return res;
}

}  // namespace mmks::radial
