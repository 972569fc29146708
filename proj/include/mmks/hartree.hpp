#pragma once

// Hartree potential: multipole Dirichlet data and the Poisson solve
// -∇²φ = 4πρ on the Hartree mesh.

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "mmks/error.hpp"
#include "mmks/fespace.hpp"
#include "mmks/geometry.hpp"
#include "mmks/quadrature.hpp"
#include "mmks/sparse.hpp"

namespace mmks::hartree {

struct MultipoleMoments {
  double charge = 0.0;
  Vec3 center{};
  Vec3 dipole{};
  std::array<std::array<double, 3>, 3> quadrupole{};  // ½∫ρ (x_i − c_i)(x_j − c_j)
};

/// Moments of ρ about its centroid.
inline MultipoleMoments compute_moments(const Field& rho, const Quadrature& q = tet_quadrature(2)) {
  require_current(rho);
  const FESpace& s = *rho.space;
  MultipoleMoments m;
  Vec3 first{};
  auto each = [&](auto&& fn) {
    for (const auto& e : s.elements()) {
      const auto g = s.geometry(e);
      for (std::size_t p = 0; p < q.size(); ++p) {
        const auto& lam = q.points[p];
        double v = 0.0;
        for (std::size_t i = 0; i < 4; ++i) v += lam[i] * rho.coeffs[static_cast<std::size_t>(e.dofs[i])];
        fn(from_barycentric(g.x, lam), q.weights[p] * g.volume * v);
      }
    }
  };
  each([&](const Vec3& x, double w) {
    m.charge += w;
    for (std::size_t i = 0; i < 3; ++i) first[i] += w * x[i];
  });
  if (!(m.charge > 0.0)) throw InvalidDensity("compute_moments: total charge is not positive");
  for (std::size_t i = 0; i < 3; ++i) m.center[i] = first[i] / m.charge;
  each([&](const Vec3& x, double w) {
    const Vec3 d = x - m.center;
    for (std::size_t i = 0; i < 3; ++i) {
      m.dipole[i] += w * d[i];
      for (std::size_t j = 0; j < 3; ++j) m.quadrupole[i][j] += 0.5 * w * d[i] * d[j];
    }
  });
  return m;
}

/// Monopole + dipole + quadrupole value at x.
inline double multipole_value(const MultipoleMoments& m, const Vec3& x) {
  const Vec3 d = x - m.center;
  const double r2 = dot(d, d);
  const double r = std::sqrt(r2);
  if (!(r > 1e-14)) throw SingularEvaluation("multipole expansion evaluated at the expansion center");
  double v = m.charge / r;
  const double r3 = r2 * r;
  for (std::size_t i = 0; i < 3; ++i) v += m.dipole[i] * d[i] / r3;
  const double r5 = r3 * r2;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) v += m.quadrupole[i][j] * (3.0 * d[i] * d[j] - (i == j ? r2 : 0.0)) / r5;
  return v;
}

inline std::vector<double> boundary_values(const MultipoleMoments& m, std::span<const Vec3> points) {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(multipole_value(m, p));
  return out;
}

struct Options {
  double cg_tol = 1e-10;
  int cg_maxit = 20000;
};

struct Result {
  Field phi;
  MultipoleMoments moments;
  int cg_iterations = 0;
  double cg_residual = 0.0;
};

/// φ on space_h; ρ is interpolated to space_h first if it lives elsewhere.
/// A zero density gives zero boundary values.
inline Result solve_hartree(const Field& rho_in, const SpacePtr& space_h, const Options& opt = {}) {
  require_current(rho_in);
  const Field rho = rho_in.space->uid() == space_h->uid() ? rho_in : interpolate(rho_in, space_h);
  const FESpace& s = *space_h;
  Result res;
  res.phi = Field(space_h);
  bool zero = true;
  for (double v : rho.coeffs) zero = zero && v == 0.0;
  std::vector<double> g(s.n_dofs(), 0.0);
  if (!zero) {
    res.moments = compute_moments(rho);
    for (std::size_t d = 0; d < s.n_dofs(); ++d)
      if (s.is_boundary_dof(d)) g[d] = multipole_value(res.moments, s.dof_point(d));
  }
  const auto stiff = assemble_stiffness(s);
  const auto mass = assemble_mass(s);
  auto b = mass * rho.coeffs;
  for (auto& x : b) x *= 4.0 * std::numbers::pi;
  // Lift: b_I − S_IB g.
  const auto sg = stiff * g;
  const auto& idx = s.interior_index();
  std::vector<double> bi(s.n_interior(), 0.0);
  for (std::size_t d = 0; d < s.n_dofs(); ++d)
    if (idx[d] >= 0) bi[static_cast<std::size_t>(idx[d])] = b[d] - sg[d];
  const auto sii = stiff.restrict_to(idx);
  std::vector<double> x0(s.n_interior(), 0.0);
  if (s.n_interior() > 0) {
    const auto cg = sparse::cg_solve(sii, bi, x0, opt.cg_tol, opt.cg_maxit, sparse::jacobi_preconditioner(sii));
    if (!cg.converged)
      throw SolverError("solve_hartree: CG did not converge (relative residual " + std::to_string(cg.relative_residual) + ")");
    res.cg_iterations = cg.iterations;
    res.cg_residual = cg.relative_residual;
    x0 = cg.x;
  }
  for (std::size_t d = 0; d < s.n_dofs(); ++d)
    res.phi.coeffs[d] = idx[d] >= 0 ? x0[static_cast<std::size_t>(idx[d])] : g[d];
  return res;
}

}  // namespace mmks::hartree
