#pragma once

// Residual error indicators on KS and Hartree meshes, their per-orbital
// normalization and combination, and refine/coarsen marking.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <ostream>
#include <span>
#include <vector>

#include "mmks/error.hpp"
#include "mmks/fespace.hpp"
#include "mmks/hgt.hpp"
#include "mmks/ks.hpp"
#include "mmks/quadrature.hpp"

namespace mmks::adapt {

/// Per-orbital scaling applied before the orbital indicators are combined.
enum class Normalization { Max, L2, Sum, None };

inline const char* to_string(Normalization n) {
  switch (n) {
    case Normalization::Max: return "max";
    case Normalization::L2: return "l2";
    case Normalization::Sum: return "sum";
    case Normalization::None: return "none";
  }
  return "?";
}

inline Normalization parse_normalization(const std::string& s) {
  if (s == "max") return Normalization::Max;
  if (s == "l2") return Normalization::L2;
  if (s == "sum") return Normalization::Sum;
  if (s == "none") return Normalization::None;
  throw ConfigError("unknown normalization '" + s + "' (expected max, l2, sum or none)");
}

/// One nonnegative value per leaf of a space's mesh (mesh.leaves() order).
struct ErrorField {
  SpacePtr space;
  std::vector<double> eta;
  std::uint64_t stamp = 0;

  std::size_t size() const { return eta.size(); }
  double max() const { return eta.empty() ? 0.0 : *std::max_element(eta.begin(), eta.end()); }
};

inline void require_current(const ErrorField& e) {
  MMKS_REQUIRE(e.space && e.stamp == e.space->generation() && e.eta.size() == e.space->mesh().size(),
               "error field is stale or has the wrong length");
}

namespace detail {

/// Interior faces of the sub-element triangulation with their two owners.
struct Face {
  std::array<std::size_t, 2> element{};
  double area = 0.0;
  double h = 0.0;  // longest edge
  Vec3 normal{};   // unit, outward from element[0]
};

inline std::vector<Face> interior_faces(const FESpace& s) {
  std::map<std::array<std::int32_t, 3>, std::vector<std::pair<std::size_t, int>>> owners;
  const auto& els = s.elements();
  for (std::size_t k = 0; k < els.size(); ++k)
    for (int o = 0; o < 4; ++o) {
      std::array<std::int32_t, 3> key{};
      std::size_t c = 0;
      for (std::size_t i = 0; i < 4; ++i)
        if (static_cast<int>(i) != o) key[c++] = els[k].dofs[i];
      std::sort(key.begin(), key.end());
      owners[key].push_back({k, o});
    }
  std::vector<Face> faces;
  for (const auto& [key, own] : owners) {
    if (own.size() != 2) continue;
    Face f;
    f.element = {own[0].first, own[1].first};
    const Vec3& a = s.dof_point(static_cast<std::size_t>(key[0]));
    const Vec3& b = s.dof_point(static_cast<std::size_t>(key[1]));
    const Vec3& c = s.dof_point(static_cast<std::size_t>(key[2]));
    const Vec3 n = cross(b - a, c - a);
    f.area = 0.5 * norm(n);
    f.h = std::max({norm(b - a), norm(c - a), norm(c - b)});
    f.normal = (1.0 / norm(n)) * n;
    const auto g = s.geometry(els[own[0].first]);
    const Vec3 opposite = g.x[static_cast<std::size_t>(own[0].second)];
    if (dot(f.normal, opposite - a) > 0.0) f.normal = -1.0 * f.normal;
    faces.push_back(f);
  }
  return faces;
}

inline double leaf_diameter(const FESpace& s, std::size_t leaf) {
  const auto x = s.tree().coordinates(s.mesh().leaves()[leaf]);
  double h = 0.0;
  for (const auto& e : hgt::kTetEdges) h = std::max(h, norm(x[static_cast<std::size_t>(e[1])] - x[static_cast<std::size_t>(e[0])]));
  return h;
}

inline Vec3 element_gradient(const FESpace& s, std::span<const double> coeffs, std::size_t k, const ElementGeometry& g) {
  Vec3 grad{};
  for (std::size_t i = 0; i < 4; ++i) grad += coeffs[static_cast<std::size_t>(s.elements()[k].dofs[i])] * g.grad[i];
  return grad;
}

/// Squared per-leaf indicator h_K²‖R‖²_K + Σ_e ½h_e‖J‖²_e for one field.
/// residual(k, g, lam) samples the strong residual at a quadrature point.
template <class Residual>
std::vector<double> leaf_indicator2(const FESpace& s, std::span<const Face> faces, std::span<const double> coeffs,
                                    const Quadrature& q, Residual&& residual) {
  const std::size_t nl = s.mesh().size();
  std::vector<double> hk(nl);
  for (std::size_t l = 0; l < nl; ++l) hk[l] = leaf_diameter(s, l);
  std::vector<double> eta2(nl, 0.0);
  const auto& els = s.elements();
  std::vector<Vec3> grads(els.size());
  for (std::size_t k = 0; k < els.size(); ++k) {
    const auto g = s.geometry(els[k]);
    grads[k] = element_gradient(s, coeffs, k, g);
    double r2 = 0.0;
    for (std::size_t p = 0; p < q.size(); ++p) {
      const double r = residual(k, g, q.points[p]);
      r2 += q.weights[p] * g.volume * r * r;
    }
    const auto l = static_cast<std::size_t>(els[k].leaf);
    eta2[l] += hk[l] * hk[l] * r2;
  }
  for (const auto& f : faces) {
    const double j = dot(grads[f.element[0]] - grads[f.element[1]], f.normal);
    const double contrib = 0.5 * f.h * j * j * f.area;
    for (auto k : f.element) eta2[static_cast<std::size_t>(els[k].leaf)] += contrib;
  }
  return eta2;
}

inline double scale_of(std::span<const double> eta, Normalization n) {
  double s = 0.0;
  switch (n) {
    case Normalization::Max:
      for (double x : eta) s = std::max(s, x);
      break;
    case Normalization::L2:
      for (double x : eta) s += x * x;
      s = std::sqrt(s);
      break;
    case Normalization::Sum:
      for (double x : eta) s += x;
      break;
    case Normalization::None:
      return 1.0;
  }
  return s;
}

inline void normalize(std::vector<double>& eta, Normalization n) {
  const double s = scale_of(eta, n);
  if (s > 0.0)
    for (auto& x : eta) x /= s;
}

inline double value_at(const FESpace& s, const Field& f, std::size_t k, const ElementGeometry& g, const std::array<double, 4>& lam) {
  if (f.space.get() == &s) return evaluate_in_element(s, f.coeffs, k, lam);
  const NodeId leaf = s.mesh().leaves()[static_cast<std::size_t>(s.elements()[k].leaf)];
  return evaluate_from(f, leaf, from_barycentric(g.x, lam));
}

}  // namespace detail

struct IndicatorOptions {
  Normalization normalization = Normalization::Max;
  int quadrature_order = 2;
  ks::Interaction interaction = ks::Interaction::Full;
};

/// η_K over the group's own orbitals: each orbital's indicator is normalized
/// and the normalized indicators are root-sum-squared. phi lives on the
/// Hartree mesh and rho on the group's mesh; either may be null.
inline ErrorField indicator_ks_group(const ks::EigenGroup& group, std::span<const ks::AtomSpec> atoms, const Field* phi,
                                     const Field* rho, const IndicatorOptions& opt = {}) {
  const FESpace& s = *group.space;
  for (const auto& o : group.orbitals) require_on(o, s);
  if (phi) require_current(*phi);
  if (rho) require_current(*rho);
  MMKS_REQUIRE(group.eigenvalues.size() >= group.orbitals.size(), "indicator_ks_group: missing eigenvalues");
  const auto faces = detail::interior_faces(s);
  const auto q = tet_quadrature(opt.quadrature_order);
  const Field* rho_local = rho && rho->space.get() == &s ? rho : nullptr;
  ks::PotentialSampler v_local{&s, atoms, phi, rho_local, opt.interaction, nullptr};
  // Potential at every quadrature point, shared by all orbitals.
  std::vector<double> pot(s.n_elements() * q.size());
  for (std::size_t k = 0; k < s.n_elements(); ++k) {
    const auto g = s.geometry(s.elements()[k]);
    for (std::size_t p = 0; p < q.size(); ++p) {
      double v = v_local(k, g, q.points[p]);
      if (rho && !rho_local && opt.interaction == ks::Interaction::Full)
        v += xc::eval_lda(detail::value_at(s, *rho, k, g, q.points[p])).v_xc;
      pot[k * q.size() + p] = v;
    }
  }
  std::vector<double> total(s.mesh().size(), 0.0);
  for (std::size_t l = 0; l < group.orbitals.size(); ++l) {
    const auto& psi = group.orbitals[l];
    const double eps = group.eigenvalues[l];
    std::size_t point = 0;
    auto eta2 = detail::leaf_indicator2(s, faces, psi.coeffs, q, [&](std::size_t k, const ElementGeometry&, const auto& lam) {
      return (pot[point++] - eps) * evaluate_in_element(s, psi.coeffs, k, lam);
    });
    for (auto& x : eta2) x = std::sqrt(x);
    detail::normalize(eta2, opt.normalization);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += eta2[i] * eta2[i];
  }
  ErrorField out{group.space, std::move(total), s.generation()};
  for (auto& x : out.eta) x = std::sqrt(x);
  return out;
}

/// η_K for the Poisson problem: residual 4πρ (∇²φ vanishes inside P1
/// elements) and jumps of ∇φ. phi may live on another mesh than `space`;
/// it is then interpolated first.
inline ErrorField indicator_hartree(const Field& phi, const Field& rho, const SpacePtr& space, const IndicatorOptions& opt = {}) {
  require_current(phi);
  require_current(rho);
  const FESpace& s = *space;
  const Field phi_s = phi.space->uid() == s.uid() ? phi : interpolate(phi, space);
  const auto faces = detail::interior_faces(s);
  const auto q = tet_quadrature(opt.quadrature_order);
  auto eta2 = detail::leaf_indicator2(s, faces, phi_s.coeffs, q, [&](std::size_t k, const ElementGeometry& g, const auto& lam) {
    return 4.0 * std::numbers::pi * detail::value_at(s, rho, k, g, lam);
  });
  ErrorField out{space, std::move(eta2), s.generation()};
  for (auto& x : out.eta) x = std::sqrt(x);
  detail::normalize(out.eta, opt.normalization);
  return out;
}

inline ErrorField indicator_hartree(const Field& phi, const Field& rho, const IndicatorOptions& opt = {}) {
  return indicator_hartree(phi, rho, phi.space, opt);
}

/// η = sqrt(η_KS² + η_Har²) per leaf.
inline ErrorField indicator_combined(const ErrorField& ks_eta, const ErrorField& har) {
  require_current(ks_eta);
  require_current(har);
  MMKS_REQUIRE(ks_eta.space->uid() == har.space->uid(), "indicator_combined: indicators live on different meshes");
  ErrorField out{ks_eta.space, ks_eta.eta, ks_eta.stamp};
  for (std::size_t i = 0; i < out.size(); ++i) out.eta[i] = std::hypot(ks_eta.eta[i], har.eta[i]);
  return out;
}

enum class MarkMode { Maximum, Absolute };

struct MarkOptions {
  MarkMode mode = MarkMode::Maximum;
  double refine_fraction = 0.5;
  double coarsen_fraction = 0.05;
  double tol_ada = 4e-6;           // Absolute mode: refine where η > tol_ada
  std::size_t max_leaves = 0;      // 0: no budget
};

struct Marks {
  std::vector<NodeId> refine;
  std::vector<NodeId> coarsen;
};

/// Maximum strategy (refine η ≥ f_r·max, coarsen complete sibling sets with
/// η ≤ f_c·max) or absolute thresholds (refine η > tol, coarsen η ≤ f_c·tol).
/// Both sets follow leaf preorder. With a leaf budget, the largest indicators
/// are refined first.
inline Marks mark(const ErrorField& e, const MarkOptions& opt = {}) {
  require_current(e);
  MMKS_REQUIRE(opt.refine_fraction >= 0.0 && opt.refine_fraction < 1.0, "mark: refine fraction must lie in [0, 1)");
  MMKS_REQUIRE(opt.coarsen_fraction >= 0.0 && opt.coarsen_fraction < 1.0, "mark: coarsen fraction must lie in [0, 1)");
  const auto& mesh = e.space->mesh();
  const auto& leaves = mesh.leaves();
  const auto& tree = mesh.tree();
  const double emax = e.max();
  const double up = opt.mode == MarkMode::Maximum ? opt.refine_fraction * emax : opt.tol_ada;
  const double down = opt.mode == MarkMode::Maximum ? opt.coarsen_fraction * emax : opt.coarsen_fraction * opt.tol_ada;
  auto refine_it = [&](double x) { return opt.mode == MarkMode::Maximum ? x >= up : x > up; };
  Marks m;
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < leaves.size(); ++i)
    if (refine_it(e.eta[i])) chosen.push_back(i);
  if (opt.max_leaves > 0) {
    const std::size_t room = opt.max_leaves > leaves.size() ? (opt.max_leaves - leaves.size()) / 7 : 0;
    if (chosen.size() > room) {
      std::stable_sort(chosen.begin(), chosen.end(), [&](auto a, auto b) { return e.eta[a] > e.eta[b]; });
      chosen.resize(room);
      std::sort(chosen.begin(), chosen.end());
    }
  }
  std::vector<std::uint8_t> refined(leaves.size(), 0);
  for (auto i : chosen) {
    refined[i] = 1;
    m.refine.push_back(leaves[i]);
  }
  // Coarsen only complete sibling sets that are all below the threshold.
  std::map<NodeId, int> low;
  for (std::size_t i = 0; i < leaves.size(); ++i)
    if (!refined[i] && e.eta[i] <= down && tree.parent(leaves[i]) != hgt::kNone) ++low[tree.parent(leaves[i])];
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (refined[i] || !(e.eta[i] <= down)) continue;
    const NodeId p = tree.parent(leaves[i]);
    if (p == hgt::kNone) continue;
    auto it = low.find(p);
    if (it != low.end() && it->second == 8) m.coarsen.push_back(leaves[i]);
  }
  return m;
}

/// Refine, then coarsen what is still a complete sibling set.
inline TetMesh apply_marks(const TetMesh& mesh, const Marks& m) {
  auto refined = hgt::refine(mesh, std::span<const NodeId>(m.refine));
  std::vector<NodeId> still;
  for (auto id : m.coarsen)
    if (refined.contains(id)) still.push_back(id);
  if (still.empty()) return refined;
  return hgt::coarsen(refined, std::span<const NodeId>(still)).mesh;
}

/// Legacy VTK of the mesh with η as cell data.
inline void write_vtk(std::ostream& os, const ErrorField& e, const std::string& name = "eta") {
  require_current(e);
  hgt::write_vtk(os, e.space->mesh(), name);
  os << "CELL_DATA " << e.size() << "\nSCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
  for (double x : e.eta) os << x << '\n';
}

}  // namespace mmks::adapt
