#pragma once

// Kohn–Sham assembly and observables: external potential, Hamiltonian and
// overlap matrices on one mesh, densities, total energy, HOMO-LUMO gap and the
// atom-centered initial guess.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mmks/dense.hpp"
#include "mmks/error.hpp"
#include "mmks/fespace.hpp"
#include "mmks/lobpcg.hpp"
#include "mmks/quadrature.hpp"
#include "mmks/sparse.hpp"
#include "mmks/xc.hpp"

namespace mmks::ks {

struct AtomSpec {
  Vec3 position{};
  double charge = 1.0;
};

/// Number of occupied orbitals: N/2 for even N, (N+1)/2 for odd N.
inline int occupied_count(int n_electrons) {
  MMKS_REQUIRE(n_electrons >= 0, "occupied_count: negative electron count");
  return (n_electrons + 1) / 2;
}

/// f_l = 2 for all occupied orbitals except the last, which holds 1 for odd N.
inline std::vector<double> occupations(int n_electrons) {
  const int n = occupied_count(n_electrons);
  std::vector<double> f(static_cast<std::size_t>(n), 2.0);
  if (n_electrons % 2 == 1) f.back() = 1.0;
  return f;
}

inline int electron_count(std::span<const AtomSpec> atoms) {
  double z = 0.0;
  for (const auto& a : atoms) {
    MMKS_REQUIRE(a.charge > 0.0, "atom charge must be positive");
    z += a.charge;
  }
  return static_cast<int>(std::lround(z));
}

inline double external_potential(std::span<const AtomSpec> atoms, const Vec3& x) {
  double v = 0.0;
  for (const auto& a : atoms) v -= a.charge / norm(x - a.position);
  return v;
}

/// One group of orbitals solved on one mesh.
struct EigenGroup {
  int index = 0;
  SpacePtr space;
  std::vector<Field> orbitals;
  std::vector<double> eigenvalues;
  std::vector<double> occupations;

  std::size_t size() const { return orbitals.size(); }
};

/// Which potential terms enter the Hamiltonian.
enum class Interaction { Full, None };

struct HamiltonianOptions {
  int quadrature_order = 4;
  Interaction interaction = Interaction::Full;
};

struct Hamiltonian {
  sparse::CsrMatrix a;       // ½S + ∫V φ_i φ_j
  sparse::CsrMatrix m;       // mass
  sparse::CsrMatrix l_half;  // ½S
};

/// Quadrature point that avoids nuclei: a point closer than 1e-12·h to a
/// nucleus is moved by 1e-8·h along the element's first edge.
inline Vec3 safe_point(std::span<const AtomSpec> atoms, const ElementGeometry& g, const Vec3& x) {
  const double h = norm(g.x[1] - g.x[0]);
  for (const auto& a : atoms)
    if (norm(x - a.position) <= 1e-12 * h) return x + 1e-8 * (g.x[1] - g.x[0]);
  return x;
}

/// Total potential V_ext + φ + v_xc(ρ) at one quadrature point of element k.
/// phi may live on any space of the same tree; rho lives on `space`.
struct PotentialSampler {
  const FESpace* space = nullptr;
  std::span<const AtomSpec> atoms;
  const Field* phi = nullptr;
  const Field* rho = nullptr;
  Interaction interaction = Interaction::Full;
  xc::Diagnostics* diag = nullptr;

  double operator()(std::size_t k, const ElementGeometry& g, const std::array<double, 4>& lam) const {
    const Vec3 x = safe_point(atoms, g, from_barycentric(g.x, lam));
    double v = external_potential(atoms, x);
    if (interaction == Interaction::None) return v;
    if (phi) {
      const NodeId leaf = space->mesh().leaves()[static_cast<std::size_t>(space->elements()[k].leaf)];
      v += phi->space.get() == space ? evaluate_in_element(*space, phi->coeffs, k, lam) : evaluate_from(*phi, leaf, x);
    }
    if (rho) v += xc::eval_lda(evaluate_in_element(*space, rho->coeffs, k, lam), diag).v_xc;
    return v;
  }
};

/// A and M on `space`. phi (Hartree mesh) and rho (this mesh) may be null,
/// which drops the corresponding terms.
inline Hamiltonian assemble_hamiltonian(const SpacePtr& space, std::span<const AtomSpec> atoms, const Field* phi,
                                        const Field* rho, const HamiltonianOptions& opt = {}, xc::Diagnostics* diag = nullptr) {
  if (phi) {
    require_current(*phi);
    MMKS_REQUIRE(phi->space->mesh().tree_ptr() == space->mesh().tree_ptr(), "assemble_hamiltonian: phi lives on another tree");
  }
  if (rho) require_on(*rho, *space);
  Hamiltonian h;
  auto s = assemble_stiffness(*space);
  h.m = assemble_mass(*space);
  h.l_half = s.combine(0.5, s, 0.0);
  const bool potential = !atoms.empty() || (opt.interaction == Interaction::Full && (phi || rho));
  if (!potential) {
    h.a = h.l_half;
    return h;
  }
  PotentialSampler sampler{space.get(), atoms, phi, rho, opt.interaction, diag};
  const auto pot = assemble_potential(*space, tet_quadrature(opt.quadrature_order), sampler);
  h.a = h.l_half.combine(1.0, pot, 1.0);
  return h;
}

/// ρ at every dof of target: Σ_groups Σ_l f_l ψ_l² with ψ interpolated to target.
inline Field compute_density(std::span<const EigenGroup> groups, const SpacePtr& target) {
  Field rho(target);
  for (const auto& g : groups)
    for (std::size_t l = 0; l < g.orbitals.size(); ++l) {
      const double f = l < g.occupations.size() ? g.occupations[l] : 0.0;
      if (f == 0.0) continue;
      const Field psi = interpolate(g.orbitals[l], target);
      for (std::size_t d = 0; d < rho.size(); ++d) rho.coeffs[d] += f * psi.coeffs[d] * psi.coeffs[d];
    }
  return rho;
}

struct EnergyTerms {
  double band = 0.0;     // Σ f ε
  double hartree = 0.0;  // ½∫φρ
  double xc_correction = 0.0;  // ∫ρ(e_xc − v_xc)
  double total = 0.0;
};

/// E = Σ f ε − E_H + ∫ρ(e_xc − v_xc). Each group's orbital density enters
/// through cross-mesh quadrature against φ (Hartree mesh) and the total ρ on
/// that group's mesh (rho_on_meshes[g]).
inline EnergyTerms total_energy(std::span<const EigenGroup> groups, const Field* phi, std::span<const Field> rho_on_meshes,
                                Interaction interaction = Interaction::Full, int quadrature_order = 4) {
  EnergyTerms e;
  for (const auto& g : groups)
    for (std::size_t l = 0; l < g.eigenvalues.size(); ++l)
      e.band += (l < g.occupations.size() ? g.occupations[l] : 0.0) * g.eigenvalues[l];
  if (interaction == Interaction::None) {
    e.total = e.band;
    return e;
  }
  const auto q = tet_quadrature(quadrature_order);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    for (std::size_t l = 0; l < g.orbitals.size(); ++l) {
      const double f = l < g.occupations.size() ? g.occupations[l] : 0.0;
      if (f == 0.0) continue;
      if (phi) e.hartree += 0.5 * f * integrate_cross({FieldPower{phi, 1}, FieldPower{&g.orbitals[l], 2}}, q);
      if (gi < rho_on_meshes.size()) {
        const Field& rho = rho_on_meshes[gi];
        require_on(rho, *g.space);
        const auto& psi = g.orbitals[l];
        const FESpace& s = *g.space;
        double acc = 0.0;
        for (std::size_t k = 0; k < s.n_elements(); ++k) {
          const auto geo = s.geometry(s.elements()[k]);
          for (std::size_t p = 0; p < q.size(); ++p) {
            const double r = evaluate_in_element(s, rho.coeffs, k, q.points[p]);
            const double v = evaluate_in_element(s, psi.coeffs, k, q.points[p]);
            const auto x = xc::eval_lda(r);
            acc += q.weights[p] * geo.volume * v * v * (x.e_xc - x.v_xc);
          }
        }
        e.xc_correction += f * acc;
      }
    }
  }
  e.total = e.band - e.hartree + e.xc_correction;
  return e;
}

struct EigenOptions {
  double tol = 1e-7;
  int maxit = 400;
  int precond_cg_iterations = 5;
  std::uint64_t seed = 12345;
  std::size_t guard = 2;  // extra random columns carried along but not required to converge
};

struct EigenSolution {
  std::vector<double> eigenvalues;
  std::vector<std::vector<double>> vectors;  // full-length, zero on the boundary
  lobpcg::EigenResult detail;
};

/// Lowest x0.cols() eigenpairs of (A, M) with homogeneous Dirichlet data. The
/// first n_locked columns of x0 are fixed external eigenvectors.
inline EigenSolution solve_eigen(const Hamiltonian& h, const FESpace& space, const dense::Matrix& x0, std::size_t n_locked,
                                 const EigenOptions& opt = {}) {
  const auto& idx = space.interior_index();
  const std::size_t ni = space.n_interior();
  MMKS_REQUIRE(x0.rows() == space.n_dofs(), "solve_eigen: initial block has the wrong length");
  const auto a = h.a.restrict_to(idx);
  const auto m = h.m.restrict_to(idx);
  const auto l = h.l_half.restrict_to(idx);
  lobpcg::EigenRequest req;
  req.a = &a;
  req.b = &m;
  const std::size_t k = x0.cols();
  const std::size_t kg = std::min(k + opt.guard, ni);
  MMKS_REQUIRE(k <= kg, "solve_eigen: more eigenpairs requested than interior dofs");
  req.x0 = dense::Matrix(ni, kg, 0.0);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t d = 0; d < space.n_dofs(); ++d)
      if (idx[d] >= 0) req.x0(static_cast<std::size_t>(idx[d]), j) = x0(d, j);
  std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t j = k; j < kg; ++j)
    for (std::size_t i = 0; i < ni; ++i) req.x0(i, j) = u(rng);
  req.n_wanted = k;
  req.n_prefix_locked = n_locked;
  req.tol = opt.tol;
  req.maxit = opt.maxit;
  req.seed = opt.seed;
  req.precond = lobpcg::build_preconditioner(l, m, opt.precond_cg_iterations);
  EigenSolution out;
  out.detail = lobpcg::solve(req);
  out.eigenvalues.assign(out.detail.eigenvalues.begin(), out.detail.eigenvalues.begin() + static_cast<std::ptrdiff_t>(k));
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> v(space.n_dofs(), 0.0);
    for (std::size_t d = 0; d < space.n_dofs(); ++d)
      if (idx[d] >= 0) v[d] = out.detail.eigenvectors(static_cast<std::size_t>(idx[d]), j);
    out.vectors.push_back(std::move(v));
  }
  return out;
}

/// ε_LUMO − ε_HOMO from an ascending list.
inline double homo_lumo_gap(std::span<const double> eigenvalues, int n_occ) {
  if (n_occ < 1 || eigenvalues.size() < static_cast<std::size_t>(n_occ) + 1)
    throw ArityError("homo_lumo_gap: need at least N_occ + 1 eigenvalues");
  return eigenvalues[static_cast<std::size_t>(n_occ)] - eigenvalues[static_cast<std::size_t>(n_occ) - 1];
}

/// Atom-centered trial functions ordered by hydrogenic energy −Z²/(2n²):
/// 1s: e^{−Zr}, 2s: (1 − Zr/2) e^{−Zr/2}, 2p: (x−X) e^{−Zr/2} ...
struct GuessFunction {
  std::size_t atom = 0;
  int n = 1;
  int component = -1;  // −1 for s, 0..2 for p_x, p_y, p_z
  double energy = 0.0;
};

inline std::vector<GuessFunction> guess_functions(std::span<const AtomSpec> atoms, std::size_t count) {
  std::vector<GuessFunction> fs;
  for (std::size_t a = 0; a < atoms.size(); ++a) {
    const double z = atoms[a].charge;
    fs.push_back({a, 1, -1, -z * z / 2.0});
    fs.push_back({a, 2, -1, -z * z / 8.0});
    for (int c = 0; c < 3; ++c) fs.push_back({a, 2, c, -z * z / 8.0 + 1e-9 * (c + 1)});
    fs.push_back({a, 3, -1, -z * z / 18.0});
  }
  std::stable_sort(fs.begin(), fs.end(), [](const auto& x, const auto& y) { return x.energy < y.energy; });
  if (fs.size() > count) fs.resize(count);
  return fs;
}

inline double guess_value(std::span<const AtomSpec> atoms, const GuessFunction& f, const Vec3& x) {
  const auto& a = atoms[f.atom];
  const Vec3 d = x - a.position;
  const double r = norm(d);
  const double z = a.charge;
  if (f.n == 1) return std::exp(-z * r);
  if (f.n == 2 && f.component < 0) return (1.0 - z * r / 2.0) * std::exp(-z * r / 2.0);
  if (f.n == 2) return d[static_cast<std::size_t>(f.component)] * std::exp(-z * r / 2.0);
  return (1.0 - 2.0 * z * r / 3.0 + 2.0 * z * z * r * r / 27.0) * std::exp(-z * r / 3.0);
}

/// n × count block of trial vectors on `space` (zero on the boundary). Missing
/// columns (more orbitals than trial functions) or random_fallback use seeded
/// random vectors.
inline dense::Matrix initial_guess(const FESpace& space, std::span<const AtomSpec> atoms, std::size_t count,
                                   std::uint64_t seed = 1, bool random_fallback = false) {
  dense::Matrix x(space.n_dofs(), count, 0.0);
  const auto fs = random_fallback ? std::vector<GuessFunction>{} : guess_functions(atoms, count);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t j = 0; j < count; ++j) {
    auto c = x.col(j);
    for (std::size_t d = 0; d < space.n_dofs(); ++d) {
      if (space.is_boundary_dof(d)) continue;
      c[d] = j < fs.size() ? guess_value(atoms, fs[j], space.dof_point(d)) : u(rng);
    }
  }
  return x;
}

}  // namespace mmks::ks
