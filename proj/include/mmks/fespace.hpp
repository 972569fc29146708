#pragma once

// Conforming P1 spaces over closed tetrahedral mesh views. Hanging points are
// degrees of freedom: a leaf with one hanging edge midpoint is split into two
// sub-tetrahedra (twin), a leaf with the three midpoints of one face into four
// (four-tetrahedron). Any other set of edge midpoints is resolved by
// triangulating each face with a rule that depends only on the face, and
// coning the face triangles to an extra dof at the leaf centroid. The
// sub-tetrahedra of all leaves form a conforming mesh, so the usual nodal basis
// over them is continuous.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmks/error.hpp"
#include "mmks/geometry.hpp"
#include "mmks/hgt.hpp"
#include "mmks/quadrature.hpp"
#include "mmks/sparse.hpp"

namespace mmks {

using hgt::NodeId;
using hgt::TetMesh;
using hgt::VertexId;

struct SubElement {
  std::array<std::int32_t, 4> dofs{};
  std::int32_t leaf = 0;  // index into mesh.leaves()
};

struct ElementGeometry {
  std::array<Vec3, 4> x{};
  std::array<Vec3, 4> grad{};
  double volume = 0.0;
};

class FESpace {
 public:
  /// Builds the space; the mesh must be closed.
  static std::shared_ptr<const FESpace> build(const TetMesh& mesh) {
    auto s = std::shared_ptr<FESpace>(new FESpace());
    s->init(mesh);
    return s;
  }

  const TetMesh& mesh() const { return mesh_; }
  const hgt::TetTree& tree() const { return mesh_.tree(); }
  std::uint64_t generation() const { return mesh_.generation(); }
  std::uint64_t uid() const { return uid_; }

  std::size_t n_dofs() const { return dof_vertex_.size(); }
  std::size_t n_elements() const { return elements_.size(); }
  std::size_t n_macro_elements() const { return n_macro_; }

  const std::vector<SubElement>& elements() const { return elements_; }
  const Vec3& dof_point(std::size_t d) const { return dof_point_[d]; }
  /// Tree vertex of a dof; kNone for leaf-centroid dofs.
  VertexId dof_vertex(std::size_t d) const { return dof_vertex_[d]; }

  /// Dof of a tree vertex, or -1.
  std::int32_t dof_of_vertex(VertexId v) const {
    return v < vertex_dof_.size() ? vertex_dof_[v] : -1;
  }

  bool is_boundary_dof(std::size_t d) const { return boundary_[d] != 0; }
  const std::vector<std::uint8_t>& boundary_flags() const { return boundary_; }

  /// Index among interior dofs, -1 for boundary dofs.
  const std::vector<std::int32_t>& interior_index() const { return interior_index_; }
  std::size_t n_interior() const { return n_interior_; }

  /// Sub-elements of leaf i (index into mesh().leaves()).
  std::span<const SubElement> leaf_elements(std::size_t leaf_index) const {
    return {elements_.data() + leaf_first_[leaf_index], static_cast<std::size_t>(leaf_first_[leaf_index + 1] - leaf_first_[leaf_index])};
  }
  std::size_t leaf_element_offset(std::size_t leaf_index) const { return static_cast<std::size_t>(leaf_first_[leaf_index]); }

  /// Index of a leaf node in mesh().leaves(), or -1.
  std::int32_t leaf_index(NodeId n) const { return n < leaf_index_.size() ? leaf_index_[n] : -1; }

  ElementGeometry geometry(const SubElement& e) const {
    ElementGeometry g;
    for (std::size_t i = 0; i < 4; ++i) g.x[i] = dof_point(static_cast<std::size_t>(e.dofs[i]));
    g.grad = barycentric_gradients(g.x);
    g.volume = volume(g.x[0], g.x[1], g.x[2], g.x[3]);
    return g;
  }

  const std::vector<std::vector<std::int32_t>>& pattern() const { return pattern_; }

  /// Element (global index) of the leaf that contains p, and p's barycentric coordinates in it.
  std::pair<std::size_t, std::array<double, 4>> find_element(NodeId leaf, const Vec3& p) const {
    const auto li = leaf_index(leaf);
    MMKS_REQUIRE(li >= 0, "find_element: node is not a leaf of this space");
    std::size_t best = 0;
    std::array<double, 4> best_lam{};
    double best_score = -std::numeric_limits<double>::infinity();
    const auto first = static_cast<std::size_t>(leaf_first_[static_cast<std::size_t>(li)]);
    const auto last = static_cast<std::size_t>(leaf_first_[static_cast<std::size_t>(li) + 1]);
    for (std::size_t k = first; k < last; ++k) {
      std::array<Vec3, 4> x{};
      for (std::size_t i = 0; i < 4; ++i) x[i] = dof_point(static_cast<std::size_t>(elements_[k].dofs[i]));
      const auto lam = barycentric(x, p);
      const double s = min_coordinate(lam);
      if (s > best_score) {
        best_score = s;
        best = k;
        best_lam = lam;
      }
    }
    return {best, best_lam};
  }

 private:
  FESpace() : uid_(next_uid()) {}

  static std::uint64_t next_uid() {
    static std::atomic<std::uint64_t> counter{1};
    return counter++;
  }

  /// Triangulation of a face from its present edge midpoints; depends only on
  /// the face, so both leaves sharing it agree.
  static std::vector<std::array<VertexId, 3>> face_triangles(const hgt::TetTree& tree, const std::vector<std::uint8_t>& present,
                                                             std::array<VertexId, 3> f) {
    std::sort(f.begin(), f.end());
    auto mid = [&](VertexId a, VertexId b) {
      VertexId m = hgt::kNone;
      return hgt::detail::present_mid(tree, present, a, b, &m) ? m : hgt::kNone;
    };
    // Edge k is opposite f[k].
    const std::array<VertexId, 3> m{mid(f[1], f[2]), mid(f[0], f[2]), mid(f[0], f[1])};
    const int count = (m[0] != hgt::kNone) + (m[1] != hgt::kNone) + (m[2] != hgt::kNone);
    if (count == 0) return {f};
    if (count == 3) return {{f[0], m[2], m[1]}, {m[2], f[1], m[0]}, {m[1], m[0], f[2]}, {m[0], m[1], m[2]}};
    if (count == 1) {
      std::size_t k = 0;
      while (m[k] == hgt::kNone) ++k;
      const VertexId a = f[(k + 1) % 3], b = f[(k + 2) % 3];
      return {{f[k], a, m[k]}, {f[k], m[k], b}};
    }
    // Two midpoints on edges meeting at s = f[k]; p < q by id.
    std::size_t k = 0;
    while (m[k] != hgt::kNone) ++k;
    const VertexId s = f[k];
    const std::size_t ip = (k + 1) % 3 < (k + 2) % 3 ? (k + 1) % 3 : (k + 2) % 3;
    const std::size_t iq = 3 - k - ip;
    const VertexId p = f[ip], q = f[iq];
    const VertexId mp = m[iq];  // on edge s–p
    const VertexId mq = m[ip];  // on edge s–q
    return {{s, mp, mq}, {mp, p, mq}, {p, q, mq}};
  }

  void init(const TetMesh& mesh) {
    mesh_ = mesh;
    const auto& tree = mesh.tree();
    const auto present = hgt::detail::vertex_presence(tree, mesh.membership());
    vertex_dof_.assign(tree.n_vertices(), -1);
    leaf_index_.assign(tree.size(), -1);
    leaf_first_.assign(mesh.size() + 1, 0);
    auto dof = [&](VertexId v) {
      if (vertex_dof_[v] < 0) {
        vertex_dof_[v] = static_cast<std::int32_t>(dof_vertex_.size());
        dof_vertex_.push_back(v);
        dof_point_.push_back(tree.point(v));
      }
      return vertex_dof_[v];
    };
    for (std::size_t li = 0; li < mesh.size(); ++li) {
      const NodeId leaf = mesh.leaves()[li];
      leaf_index_[leaf] = static_cast<std::int32_t>(li);
      unsigned mask = 0;
      const auto pattern = hgt::leaf_pattern(tree, present, leaf, &mask);
      MMKS_REQUIRE(pattern != hgt::LeafPattern::Irregular, "build_space: mesh is not closed (2:1 balance violated)");
      const auto& v = tree.node(leaf).vertices;
      auto push = [&](std::array<VertexId, 4> t) {
        SubElement e;
        for (std::size_t i = 0; i < 4; ++i) e.dofs[i] = dof(t[i]);
        e.leaf = static_cast<std::int32_t>(li);
        elements_.push_back(e);
      };
      if (pattern == hgt::LeafPattern::Conforming) {
        push(v);
      } else if (pattern == hgt::LeafPattern::Twin) {
        ++n_macro_;
        const int e = std::countr_zero(mask);
        const auto i = static_cast<std::size_t>(hgt::kTetEdges[static_cast<std::size_t>(e)][0]);
        const auto j = static_cast<std::size_t>(hgt::kTetEdges[static_cast<std::size_t>(e)][1]);
        const VertexId m = tree.find_midpoint(v[i], v[j]);
        auto a = v;
        a[j] = m;
        auto b = v;
        b[i] = m;
        push(a);
        push(b);
      } else if (pattern == hgt::LeafPattern::Four) {
        ++n_macro_;
        std::size_t f = 0;
        while (hgt::kTetFaceEdgeMask[f] != mask) ++f;
        const auto& fv = hgt::kTetFaces[f];
        auto mid = [&](int p, int q) { return tree.find_midpoint(v[static_cast<std::size_t>(p)], v[static_cast<std::size_t>(q)]); };
        for (int c = 0; c < 3; ++c) {
          const int i = fv[static_cast<std::size_t>(c)];
          const int j = fv[static_cast<std::size_t>((c + 1) % 3)];
          const int k = fv[static_cast<std::size_t>((c + 2) % 3)];
          auto t = v;
          t[static_cast<std::size_t>(j)] = mid(i, j);
          t[static_cast<std::size_t>(k)] = mid(i, k);
          push(t);
        }
        auto t = v;
        const int i = fv[0], j = fv[1], k = fv[2];
        t[static_cast<std::size_t>(i)] = mid(j, k);
        t[static_cast<std::size_t>(j)] = mid(i, k);
        t[static_cast<std::size_t>(k)] = mid(i, j);
        push(t);
      } else {
        ++n_macro_;
        const auto c = static_cast<std::int32_t>(dof_vertex_.size());
        dof_vertex_.push_back(hgt::kNone);
        const auto x = tree.coordinates(leaf);
        dof_point_.push_back(0.25 * (x[0] + x[1] + x[2] + x[3]));
        for (const auto& fv : hgt::kTetFaces) {
          const std::array<VertexId, 3> face{v[static_cast<std::size_t>(fv[0])], v[static_cast<std::size_t>(fv[1])],
                                              v[static_cast<std::size_t>(fv[2])]};
          for (const auto& tri : face_triangles(tree, present, face)) {
            SubElement e;
            for (std::size_t i = 0; i < 3; ++i) e.dofs[i] = dof(tri[i]);
            e.dofs[3] = c;
            if (signed_volume(dof_point_[static_cast<std::size_t>(e.dofs[0])], dof_point_[static_cast<std::size_t>(e.dofs[1])],
                              dof_point_[static_cast<std::size_t>(e.dofs[2])], dof_point_[static_cast<std::size_t>(c)]) < 0.0)
              std::swap(e.dofs[1], e.dofs[2]);
            e.leaf = static_cast<std::int32_t>(li);
            elements_.push_back(e);
          }
        }
      }
      leaf_first_[li + 1] = static_cast<std::int64_t>(elements_.size());
    }
    boundary_.assign(dof_vertex_.size(), 0);
    interior_index_.assign(dof_vertex_.size(), -1);
    for (std::size_t d = 0; d < dof_vertex_.size(); ++d) {
      boundary_[d] = dof_vertex_[d] != hgt::kNone && tree.on_boundary(dof_vertex_[d]) ? 1 : 0;
      if (!boundary_[d]) interior_index_[d] = static_cast<std::int32_t>(n_interior_++);
    }
    pattern_ = sparse::pattern_from_elements(dof_vertex_.size(), elements_, [](const SubElement& e) { return e.dofs; });
  }

  TetMesh mesh_;
  std::uint64_t uid_;
  std::vector<std::int32_t> vertex_dof_;
  std::vector<VertexId> dof_vertex_;
  std::vector<Vec3> dof_point_;
  std::vector<SubElement> elements_;
  std::vector<std::int64_t> leaf_first_;
  std::vector<std::int32_t> leaf_index_;
  std::vector<std::uint8_t> boundary_;
  std::vector<std::int32_t> interior_index_;
  std::size_t n_interior_ = 0;
  std::size_t n_macro_ = 0;
  std::vector<std::vector<std::int32_t>> pattern_;
};

using SpacePtr = std::shared_ptr<const FESpace>;

inline SpacePtr build_space(const TetMesh& mesh) { return FESpace::build(mesh); }

/// Coefficient vector of a P1 space (values at dof points).
struct Field {
  SpacePtr space;
  std::vector<double> coeffs;
  std::uint64_t stamp = 0;

  Field() = default;
  explicit Field(SpacePtr s) : space(std::move(s)), coeffs(space->n_dofs(), 0.0), stamp(space->generation()) {}
  Field(SpacePtr s, std::vector<double> c) : space(std::move(s)), coeffs(std::move(c)), stamp(space->generation()) {
    MMKS_REQUIRE(coeffs.size() == space->n_dofs(), "Field: coefficient count differs from dof count");
  }

  std::size_t size() const { return coeffs.size(); }
};

inline void require_current(const Field& f) {
  MMKS_REQUIRE(f.space && f.stamp == f.space->generation(), "field generation stamp is stale");
}

/// Field that must live on the given space (same space object).
inline void require_on(const Field& f, const FESpace& s) {
  require_current(f);
  MMKS_REQUIRE(f.space->uid() == s.uid(), "field does not live on the expected space");
}

/// Nodal interpolant of g.
template <class Fn>
Field interpolate_function(const SpacePtr& space, Fn&& g) {
  Field f(space);
  for (std::size_t d = 0; d < space->n_dofs(); ++d) f.coeffs[d] = g(space->dof_point(d));
  return f;
}

inline double evaluate_in_element(const FESpace& s, std::span<const double> coeffs, std::size_t element,
                                  const std::array<double, 4>& lam) {
  const auto& e = s.elements()[element];
  double v = 0.0;
  for (std::size_t i = 0; i < 4; ++i) v += lam[i] * coeffs[static_cast<std::size_t>(e.dofs[i])];
  return v;
}

/// Value of f at p, starting the leaf search from hint (any tree node whose
/// region contains p, or kNone).
inline double evaluate_from(const Field& f, NodeId hint, const Vec3& p) {
  require_current(f);
  const auto& s = *f.space;
  const NodeId leaf = s.mesh().locate(p, hint);
  const auto [el, lam] = s.find_element(leaf, p);
  return evaluate_in_element(s, f.coeffs, el, lam);
}

inline double evaluate(const Field& f, const Vec3& p) { return evaluate_from(f, hgt::kNone, p); }

/// target coefficients = f at every target dof point.
inline Field interpolate(const Field& f, const SpacePtr& target) {
  require_current(f);
  MMKS_REQUIRE(f.space->mesh().tree_ptr() == target->mesh().tree_ptr(), "interpolate: spaces live on different trees");
  if (f.space->uid() == target->uid()) return f;
  Field out(target);
  std::vector<std::uint8_t> done(target->n_dofs(), 0);
  const auto& leaves = target->mesh().leaves();
  for (const auto& e : target->elements()) {
    const NodeId hint = leaves[static_cast<std::size_t>(e.leaf)];
    for (auto d : e.dofs) {
      const auto du = static_cast<std::size_t>(d);
      if (done[du]) continue;
      done[du] = 1;
      const VertexId v = target->dof_vertex(du);
      const auto src = f.space->dof_of_vertex(v);
      out.coeffs[du] = src >= 0 ? f.coeffs[static_cast<std::size_t>(src)] : evaluate_from(f, hint, target->dof_point(du));
    }
  }
  return out;
}

/// Transfer after one adapt step: shared vertices copy values, new vertices are
/// evaluated from the old field (edge-midpoint averages for refined cells).
inline Field transfer_after_adapt(const Field& f, const SpacePtr& new_space) {
  require_current(f);
  MMKS_REQUIRE(f.space->mesh().tree_ptr() == new_space->mesh().tree_ptr(),
               "transfer_after_adapt: meshes do not share a tree");
  return interpolate(f, new_space);
}

/// Element-level P1 integrals.
namespace local {

inline std::array<std::array<double, 4>, 4> stiffness(const ElementGeometry& g) {
  std::array<std::array<double, 4>, 4> k{};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) k[i][j] = g.volume * dot(g.grad[i], g.grad[j]);
  return k;
}

inline std::array<std::array<double, 4>, 4> mass(const ElementGeometry& g) {
  std::array<std::array<double, 4>, 4> m{};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) m[i][j] = g.volume * (i == j ? 0.1 : 0.05);
  return m;
}

}  // namespace local

using LocalMatrix = std::array<std::array<double, 4>, 4>;

/// Global matrix Σ_e scatter(kernel(e)); kernel gets (element index, geometry).
template <class Kernel>
sparse::CsrMatrix assemble(const FESpace& s, Kernel&& kernel) {
  auto a = sparse::CsrMatrix::from_pattern(s.pattern());
  const auto& els = s.elements();
  for (std::size_t k = 0; k < els.size(); ++k) {
    const auto g = s.geometry(els[k]);
    const LocalMatrix loc = kernel(k, g);
    double scale = 0.0;
    for (const auto& r : loc)
      for (double x : r) scale = std::max(scale, std::abs(x));
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = i + 1; j < 4; ++j)
        MMKS_REQUIRE(std::abs(loc[i][j] - loc[j][i]) <= 1e-12 * std::max(scale, 1.0), "assemble: local matrix is not symmetric");
    const auto& d = els[k].dofs;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        a.add(static_cast<std::size_t>(d[i]), static_cast<std::size_t>(d[j]), loc[i][j]);
  }
  return a;
}

inline sparse::CsrMatrix assemble_stiffness(const FESpace& s) {
  return assemble(s, [](std::size_t, const ElementGeometry& g) { return local::stiffness(g); });
}

inline sparse::CsrMatrix assemble_mass(const FESpace& s) {
  return assemble(s, [](std::size_t, const ElementGeometry& g) { return local::mass(g); });
}

/// ∫ V φ_i φ_j with V sampled at quadrature points; v(element, point) -> value.
template <class Potential>
sparse::CsrMatrix assemble_potential(const FESpace& s, const Quadrature& q, Potential&& v) {
  return assemble(s, [&](std::size_t k, const ElementGeometry& g) {
    LocalMatrix loc{};
    for (std::size_t p = 0; p < q.size(); ++p) {
      const auto& lam = q.points[p];
      const double w = q.weights[p] * g.volume * v(k, g, lam);
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) loc[i][j] += w * lam[i] * lam[j];
    }
    return loc;
  });
}

/// ∫ f φ_i with f sampled at quadrature points.
template <class Source>
std::vector<double> assemble_load(const FESpace& s, const Quadrature& q, Source&& f) {
  std::vector<double> b(s.n_dofs(), 0.0);
  const auto& els = s.elements();
  for (std::size_t k = 0; k < els.size(); ++k) {
    const auto g = s.geometry(els[k]);
    for (std::size_t p = 0; p < q.size(); ++p) {
      const auto& lam = q.points[p];
      const double w = q.weights[p] * g.volume * f(k, g, lam);
      for (std::size_t i = 0; i < 4; ++i) b[static_cast<std::size_t>(els[k].dofs[i])] += w * lam[i];
    }
  }
  return b;
}

/// ‖f‖² in the M-inner product.
inline double mass_norm2(const sparse::CsrMatrix& m, std::span<const double> x) {
  const auto mx = m * x;
  return sparse::dot(x, mx);
}

/// A field with a multiplicity (power) inside a cross-mesh product integral.
struct FieldPower {
  const Field* field;
  int power = 1;
};

/// Tiles of the finest common refinement of several views: cells that lie at
/// or below a leaf of every view and are a leaf of at least one.
inline std::vector<NodeId> finest_common_cells(std::span<const TetMesh* const> views) {
  MMKS_REQUIRE(!views.empty(), "finest_common_cells: no views");
  const auto& tree = views[0]->tree();
  std::vector<NodeId> out;
  struct Item {
    NodeId node;
    std::uint64_t covered;
  };
  MMKS_REQUIRE(views.size() <= 63, "finest_common_cells: at most 63 views");
  const std::uint64_t all = (std::uint64_t{1} << views.size()) - 1;
  std::vector<Item> stack;
  for (auto it = tree.roots().rbegin(); it != tree.roots().rend(); ++it) stack.push_back({*it, 0});
  while (!stack.empty()) {
    auto [n, covered] = stack.back();
    stack.pop_back();
    for (std::size_t k = 0; k < views.size(); ++k)
      if (views[k]->contains(n)) covered |= std::uint64_t{1} << k;
    if (covered == all) {
      out.push_back(n);
      continue;
    }
    for (int k = 7; k >= 0; --k) stack.push_back({tree.child(n, k), covered});
  }
  return out;
}

/// Visits every quadrature point of the finest common tiling of the spaces'
/// meshes. Each tile is split by the sub-elements of the participating space
/// that has the tile as a leaf with the most sub-elements. visit(x, weight,
/// values) receives the values of every space's coefficient vectors through
/// the supplied evaluators.
template <class Visit>
void for_each_cross_point(std::span<const FESpace* const> spaces, const Quadrature& q, Visit&& visit) {
  MMKS_REQUIRE(!spaces.empty(), "cross-mesh integration: no spaces");
  const auto tree = spaces[0]->mesh().tree_ptr();
  std::vector<const TetMesh*> views;
  for (auto s : spaces) {
    MMKS_REQUIRE(s->mesh().tree_ptr() == tree, "cross-mesh integration: spaces live on different trees");
    views.push_back(&s->mesh());
  }
  const auto tiles = finest_common_cells(std::span<const TetMesh* const>(views));
  // Per space: (element index, barycentric) of the current point.
  std::vector<std::pair<std::size_t, std::array<double, 4>>> loc(spaces.size());
  std::vector<NodeId> cover(spaces.size());
  for (const NodeId tile : tiles) {
    std::size_t best = 0;
    std::size_t best_count = 0;
    for (std::size_t k = 0; k < spaces.size(); ++k) {
      cover[k] = spaces[k]->mesh().covering_leaf(tile);
      if (cover[k] != tile) continue;
      const auto li = static_cast<std::size_t>(spaces[k]->leaf_index(tile));
      const auto c = spaces[k]->leaf_elements(li).size();
      if (c > best_count) {
        best_count = c;
        best = k;
      }
    }
    const FESpace& split = *spaces[best];
    const auto li = static_cast<std::size_t>(split.leaf_index(tile));
    for (const auto& sub : split.leaf_elements(li)) {
      const auto g = split.geometry(sub);
      for (std::size_t p = 0; p < q.size(); ++p) {
        const Vec3 x = from_barycentric(g.x, q.points[p]);
        for (std::size_t k = 0; k < spaces.size(); ++k) loc[k] = spaces[k]->find_element(cover[k], x);
        visit(x, q.weights[p] * g.volume, std::span<const std::pair<std::size_t, std::array<double, 4>>>(loc));
      }
    }
  }
}

/// ∫ Π f_i^{m_i} over the domain, on the finest common tiling of the fields' meshes.
inline double integrate_cross(std::span<const FieldPower> fs, const Quadrature& q) {
  MMKS_REQUIRE(!fs.empty(), "integrate_cross: empty field list");
  std::vector<const FESpace*> spaces;
  for (const auto& f : fs) {
    require_current(*f.field);
    spaces.push_back(f.field->space.get());
  }
  double sum = 0.0, comp = 0.0;
  for_each_cross_point(std::span<const FESpace* const>(spaces), q,
                       [&](const Vec3&, double w, std::span<const std::pair<std::size_t, std::array<double, 4>>> loc) {
                         double v = w;
                         for (std::size_t k = 0; k < fs.size(); ++k) {
                           const double fv = evaluate_in_element(*spaces[k], fs[k].field->coeffs, loc[k].first, loc[k].second);
                           for (int r = 0; r < fs[k].power; ++r) v *= fv;
                         }
                         const double t = sum + v;
                         comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
                         sum = t;
                       });
  return sum + comp;
}

inline double integrate_cross(std::initializer_list<FieldPower> fs, const Quadrature& q) {
  return integrate_cross(std::span<const FieldPower>(fs.begin(), fs.size()), q);
}

/// VTK legacy ASCII unstructured grid of the sub-elements with point data.
inline void write_vtk(std::ostream& os, const FESpace& s, std::span<const std::pair<std::string, const Field*>> fields) {
  os << "# vtk DataFile Version 3.0\nmmks field\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os.precision(17);
  os << "POINTS " << s.n_dofs() << " double\n";
  for (std::size_t d = 0; d < s.n_dofs(); ++d) {
    const auto& p = s.dof_point(d);
    os << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
  }
  os << "CELLS " << s.n_elements() << ' ' << 5 * s.n_elements() << '\n';
  for (const auto& e : s.elements()) os << "4 " << e.dofs[0] << ' ' << e.dofs[1] << ' ' << e.dofs[2] << ' ' << e.dofs[3] << '\n';
  os << "CELL_TYPES " << s.n_elements() << '\n';
  for (std::size_t i = 0; i < s.n_elements(); ++i) os << "10\n";
  if (fields.empty()) return;
  os << "POINT_DATA " << s.n_dofs() << '\n';
  for (const auto& [name, f] : fields) {
    require_on(*f, s);
    os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (double v : f->coeffs) os << v << '\n';
  }
}

}  // namespace mmks
