#pragma once

// Hierarchical geometry tree: one shared octree of tetrahedra (or binary tree
// of intervals) whose leaf sets are the meshes. Nodes are never re-keyed;
// coarsening only releases children from a view, so ancestry alone relates
// cells of any two meshes built on the same tree.
//
// Every view is kept "closed": each leaf sees at most one-level hanging
// points, and only in the two patterns that admit a conforming macro element
// (a single hanging edge midpoint, or the three midpoints of one face). Leaves
// with any other pattern are refined until the view is closed.

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <ostream>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mmks/error.hpp"
#include "mmks/geometry.hpp"

namespace mmks::hgt {

using NodeId = std::uint32_t;
using VertexId = std::uint32_t;
inline constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

enum class Relation { Equal, Contains, ContainedBy, Disjoint };

inline const char* to_string(Relation r) {
  switch (r) {
    case Relation::Equal: return "Equal";
    case Relation::Contains: return "Contains";
    case Relation::ContainedBy: return "ContainedBy";
    case Relation::Disjoint: return "Disjoint";
  }
  return "?";
}

struct TetCell {
  static constexpr int kDim = 3;
  static constexpr int kVertices = 4;
  static constexpr int kChildren = 8;
  using Point = Vec3;
};

struct IntervalCell {
  static constexpr int kDim = 1;
  static constexpr int kVertices = 2;
  static constexpr int kChildren = 2;
  using Point = double;
};

// Local edge and face tables of a tetrahedron.
inline constexpr std::array<std::array<int, 2>, 6> kTetEdges{{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
// Face f is opposite vertex f.
inline constexpr std::array<std::array<int, 3>, 4> kTetFaces{{{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}}};
// Edge bitmask of each face.
inline constexpr std::array<unsigned, 4> kTetFaceEdgeMask{
    (1u << 3) | (1u << 4) | (1u << 5),  // 12 13 23
    (1u << 1) | (1u << 2) | (1u << 5),  // 02 03 23
    (1u << 0) | (1u << 2) | (1u << 4),  // 01 03 13
    (1u << 0) | (1u << 1) | (1u << 3),  // 01 02 12
};

/// Hanging-point pattern of a leaf: which of its edges carry a midpoint vertex.
/// Cone covers every other one-level pattern; Irregular means a point two or
/// more levels deeper touches the leaf (2:1 balance violated).
enum class LeafPattern { Conforming, Twin, Four, Cone, Irregular };

inline LeafPattern classify_edge_mask(unsigned mask) {
  if (mask == 0) return LeafPattern::Conforming;
  if (std::popcount(mask) == 1) return LeafPattern::Twin;
  for (unsigned f : kTetFaceEdgeMask)
    if (mask == f) return LeafPattern::Four;
  return LeafPattern::Cone;
}

template <class Cell>
class GeometryTree {
 public:
  using Point = typename Cell::Point;
  static constexpr int kVertices = Cell::kVertices;
  static constexpr int kChildren = Cell::kChildren;

  struct Node {
    std::array<VertexId, Cell::kVertices> vertices{};
    NodeId parent = kNone;
    NodeId first_child = kNone;
    std::uint16_t level = 0;
    std::uint8_t child_index = 0;
  };

  GeometryTree() : uid_(next_uid()) {}

  std::uint64_t uid() const { return uid_; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t n_vertices() const { return points_.size(); }

  const Node& node(NodeId id) const { return nodes_[id]; }
  const Point& point(VertexId v) const { return points_[v]; }
  const std::vector<NodeId>& roots() const { return roots_; }

  NodeId parent(NodeId id) const { return nodes_[id].parent; }
  int level(NodeId id) const { return nodes_[id].level; }
  bool has_children(NodeId id) const { return nodes_[id].first_child != kNone; }
  NodeId child(NodeId id, int k) const { return nodes_[id].first_child + static_cast<NodeId>(k); }

  std::array<Point, Cell::kVertices> coordinates(NodeId id) const {
    std::array<Point, Cell::kVertices> c{};
    for (int i = 0; i < kVertices; ++i) c[static_cast<std::size_t>(i)] = points_[nodes_[id].vertices[static_cast<std::size_t>(i)]];
    return c;
  }

  double measure(NodeId id) const {
    const auto c = coordinates(id);
    if constexpr (Cell::kDim == 3) {
      return volume(c[0], c[1], c[2], c[3]);
    } else {
      return std::abs(c[1] - c[0]);
    }
  }

  VertexId add_vertex(const Point& p) {
    points_.push_back(p);
    return static_cast<VertexId>(points_.size() - 1);
  }

  NodeId add_root(const std::array<VertexId, Cell::kVertices>& v) {
    Node n;
    n.vertices = v;
    if constexpr (Cell::kDim == 3) orient(n.vertices);
    nodes_.push_back(n);
    const auto id = static_cast<NodeId>(nodes_.size() - 1);
    roots_.push_back(id);
    return id;
  }

  /// Midpoint vertex of (a, b) if it was ever created.
  VertexId find_midpoint(VertexId a, VertexId b) const {
    auto it = midpoints_.find(edge_key(a, b));
    return it == midpoints_.end() ? kNone : it->second;
  }

  VertexId midpoint_vertex(VertexId a, VertexId b) {
    const auto key = edge_key(a, b);
    auto it = midpoints_.find(key);
    if (it != midpoints_.end()) return it->second;
    Point p{};
    if constexpr (Cell::kDim == 3) {
      p = midpoint(points_[a], points_[b]);
    } else {
      p = 0.5 * (points_[a] + points_[b]);
    }
    const auto v = add_vertex(p);
    midpoints_.emplace(key, v);
    return v;
  }

  /// Creates the children of a node if they do not exist yet.
  void ensure_children(NodeId id) {
    if (nodes_[id].first_child != kNone) return;
    std::array<std::array<VertexId, Cell::kVertices>, Cell::kChildren> kids{};
    if constexpr (Cell::kDim == 3) {
      kids = octasect(id);
    } else {
      const auto v = nodes_[id].vertices;
      const auto m = midpoint_vertex(v[0], v[1]);
      kids[0] = {v[0], m};
      kids[1] = {m, v[1]};
    }
    const auto first = static_cast<NodeId>(nodes_.size());
    const auto lvl = static_cast<std::uint16_t>(nodes_[id].level + 1);
    for (int k = 0; k < kChildren; ++k) {
      Node c;
      c.vertices = kids[static_cast<std::size_t>(k)];
      c.parent = id;
      c.level = lvl;
      c.child_index = static_cast<std::uint8_t>(k);
      nodes_.push_back(c);
    }
    nodes_[id].first_child = first;
  }

  /// Whether a descends from (or equals) b.
  bool is_descendant_or_self(NodeId a, NodeId b) const {
    while (a != kNone && nodes_[a].level > nodes_[b].level) a = nodes_[a].parent;
    return a == b;
  }

  Relation relation(NodeId a, NodeId b) const {
    if (a == b) return Relation::Equal;
    const int la = nodes_[a].level;
    const int lb = nodes_[b].level;
    if (la < lb && is_descendant_or_self(b, a)) return Relation::Contains;
    if (lb < la && is_descendant_or_self(a, b)) return Relation::ContainedBy;
    return Relation::Disjoint;
  }

  /// Score of p inside node: the smallest barycentric coordinate (>= 0 inside).
  double inside_score(NodeId id, const Point& p) const {
    const auto c = coordinates(id);
    if constexpr (Cell::kDim == 3) {
      return min_coordinate(barycentric(c, p));
    } else {
      const double t = (p - c[0]) / (c[1] - c[0]);
      return std::min(t, 1.0 - t);
    }
  }

  /// Child containing p (best score).
  NodeId child_containing(NodeId id, const Point& p) const {
    NodeId best = kNone;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < kChildren; ++k) {
      const auto c = child(id, k);
      const double s = inside_score(c, p);
      if (s > best_score) {
        best_score = s;
        best = c;
      }
    }
    return best;
  }

  /// Root cell containing p, or kNone when p is outside the domain.
  NodeId locate_root(const Point& p, double tol = 1e-10) const {
    if constexpr (Cell::kDim == 3) {
      if (box_n_ > 0) {
        std::array<int, 3> c{};
        for (int d = 0; d < 3; ++d) {
          const double t = (p[static_cast<std::size_t>(d)] + box_half_) / (2.0 * box_half_) * box_n_;
          if (t < -tol * box_n_ || t > box_n_ * (1.0 + tol)) return kNone;
          c[static_cast<std::size_t>(d)] = std::clamp(static_cast<int>(std::floor(t)), 0, box_n_ - 1);
        }
        const auto cube = static_cast<std::size_t>((c[2] * box_n_ + c[1]) * box_n_ + c[0]);
        NodeId best = kNone;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < 6; ++k) {
          const auto r = roots_[cube * 6 + k];
          const double s = inside_score(r, p);
          if (s > best_score) {
            best_score = s;
            best = r;
          }
        }
        if (best_score >= -tol) return best;
      }
    }
    NodeId best = kNone;
    double best_score = -std::numeric_limits<double>::infinity();
    for (auto r : roots_) {
      const double s = inside_score(r, p);
      if (s > best_score) {
        best_score = s;
        best = r;
      }
    }
    return best_score >= -tol ? best : kNone;
  }

  void set_box(double half_width, int n) {
    box_half_ = half_width;
    box_n_ = n;
  }
  double box_half_width() const { return box_half_; }
  int box_cells() const { return box_n_; }

  /// Whether vertex v lies on the boundary of the root domain.
  bool on_boundary(VertexId v) const {
    if constexpr (Cell::kDim == 3) {
      if (box_n_ > 0) {
        const auto& p = points_[v];
        const double tol = 1e-12 * box_half_;
        for (int d = 0; d < 3; ++d)
          if (std::abs(std::abs(p[static_cast<std::size_t>(d)]) - box_half_) <= tol) return true;
        return false;
      }
      return boundary_vertex_.size() > v && boundary_vertex_[v];
    } else {
      return points_[v] == interval_lo_ || points_[v] == interval_hi_;
    }
  }

  void set_interval(double lo, double hi) {
    interval_lo_ = lo;
    interval_hi_ = hi;
  }

  /// Marks vertices as boundary for trees without a box (single-cell trees).
  void set_boundary_vertices(std::vector<bool> flags) { boundary_vertex_ = std::move(flags); }
  const std::vector<bool>& boundary_flags() const { return boundary_vertex_; }

  // Raw access for checkpointing.
  const std::vector<Point>& points() const { return points_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::unordered_map<std::uint64_t, VertexId>& midpoint_registry() const { return midpoints_; }

  /// Rebuilds a tree from raw arrays (checkpoint restore).
  static std::shared_ptr<GeometryTree> restore(std::vector<Point> points, std::vector<Node> nodes,
                                               std::vector<NodeId> roots,
                                               std::unordered_map<std::uint64_t, VertexId> midpoints,
                                               double box_half, int box_n) {
    auto t = std::make_shared<GeometryTree>();
    t->points_ = std::move(points);
    t->nodes_ = std::move(nodes);
    t->roots_ = std::move(roots);
    t->midpoints_ = std::move(midpoints);
    t->box_half_ = box_half;
    t->box_n_ = box_n;
    return t;
  }

  static std::uint64_t edge_key(VertexId a, VertexId b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }

 private:
  static std::uint64_t next_uid() {
    static std::atomic<std::uint64_t> counter{1};
    return counter++;
  }

  void orient(std::array<VertexId, Cell::kVertices>& v) const {
    if constexpr (Cell::kDim == 3) {
      if (signed_volume(points_[v[0]], points_[v[1]], points_[v[2]], points_[v[3]]) < 0.0) std::swap(v[2], v[3]);
    }
  }

  // Midpoint octasection. Children 0-3 are the corner tetrahedra; 4-7 split the
  // inner octahedron along its shortest diagonal (ties go to the first
  // diagonal in the order (01,23), (02,13), (03,12)). Child 7 is the
  // octahedron piece sharing the inner face of corner child 0.
  std::array<std::array<VertexId, 4>, 8> octasect(NodeId id) {
    const auto v = nodes_[id].vertices;
    const VertexId m01 = midpoint_vertex(v[0], v[1]);
    const VertexId m02 = midpoint_vertex(v[0], v[2]);
    const VertexId m03 = midpoint_vertex(v[0], v[3]);
    const VertexId m12 = midpoint_vertex(v[1], v[2]);
    const VertexId m13 = midpoint_vertex(v[1], v[3]);
    const VertexId m23 = midpoint_vertex(v[2], v[3]);
    std::array<std::array<VertexId, 4>, 8> kids{};
    kids[0] = {v[0], m01, m02, m03};
    kids[1] = {m01, v[1], m12, m13};
    kids[2] = {m02, m12, v[2], m23};
    kids[3] = {m03, m13, m23, v[3]};

    const std::array<std::array<VertexId, 2>, 3> diag{{{m01, m23}, {m02, m13}, {m03, m12}}};
    int best = 0;
    double best_len = std::numeric_limits<double>::infinity();
    for (int d = 0; d < 3; ++d) {
      const double len = distance(points_[diag[static_cast<std::size_t>(d)][0]], points_[diag[static_cast<std::size_t>(d)][1]]);
      if (len < best_len * (1.0 - 1e-12)) {
        best_len = len;
        best = d;
      }
    }
    const auto a = diag[static_cast<std::size_t>(best)];
    const auto b = diag[static_cast<std::size_t>((best + 1) % 3)];
    const auto c = diag[static_cast<std::size_t>((best + 2) % 3)];
    // Ring around the diagonal: b0, c0, b1, c1 (consecutive entries are adjacent).
    std::array<VertexId, 4> ring{b[0], c[0], b[1], c[1]};
    std::array<std::array<VertexId, 4>, 4> inner{};
    for (int k = 0; k < 4; ++k)
      inner[static_cast<std::size_t>(k)] = {a[0], a[1], ring[static_cast<std::size_t>(k)], ring[static_cast<std::size_t>((k + 1) % 4)]};
    // Put the piece containing m01, m02, m03 last.
    auto has_face0 = [&](const std::array<VertexId, 4>& t) {
      auto in = [&](VertexId x) { return std::find(t.begin(), t.end(), x) != t.end(); };
      return in(m01) && in(m02) && in(m03);
    };
    std::stable_partition(inner.begin(), inner.end(), [&](const auto& t) { return !has_face0(t); });
    for (int k = 0; k < 4; ++k) kids[static_cast<std::size_t>(4 + k)] = inner[static_cast<std::size_t>(k)];
    for (auto& kid : kids) orient(kid);
    return kids;
  }

  std::uint64_t uid_;
  std::vector<Point> points_;
  std::vector<Node> nodes_;
  std::vector<NodeId> roots_;
  std::unordered_map<std::uint64_t, VertexId> midpoints_;
  std::vector<bool> boundary_vertex_;
  double box_half_ = 0.0;
  int box_n_ = 0;
  double interval_lo_ = 0.0;
  double interval_hi_ = 0.0;
};

using TetTree = GeometryTree<TetCell>;
using IntervalTree = GeometryTree<IntervalCell>;

/// Reference to a node that remembers which tree it belongs to.
struct NodeRef {
  std::uint64_t tree_uid = 0;
  NodeId id = kNone;
};

template <class Cell>
NodeRef make_ref(const GeometryTree<Cell>& t, NodeId id) {
  return {t.uid(), id};
}

template <class Cell>
Relation relation(const GeometryTree<Cell>& tree, NodeRef a, NodeRef b) {
  MMKS_REQUIRE(a.tree_uid == tree.uid() && b.tree_uid == tree.uid(), "relation: nodes belong to different trees");
  return tree.relation(a.id, b.id);
}

/// Box [-L, L]^3 split into n^3 cubes of 6 tetrahedra each (Kuhn split along
/// the main diagonal, conforming across cubes).
inline std::shared_ptr<TetTree> make_box_tree(double half_width, int n) {
  MMKS_REQUIRE(half_width > 0.0 && n >= 1, "make_box_tree: need L > 0 and n >= 1");
  auto tree = std::make_shared<TetTree>();
  tree->set_box(half_width, n);
  const double h = 2.0 * half_width / n;
  auto vid = [n](int i, int j, int k) { return static_cast<VertexId>((k * (n + 1) + j) * (n + 1) + i); };
  for (int k = 0; k <= n; ++k)
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n; ++i) {
        auto coord = [&](int q) { return q == n ? half_width : -half_width + q * h; };
        tree->add_vertex({coord(i), coord(j), coord(k)});
      }
  static constexpr std::array<std::array<int, 3>, 6> perms{{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        for (const auto& p : perms) {
          std::array<int, 3> c{i, j, k};
          std::array<VertexId, 4> v{};
          v[0] = vid(c[0], c[1], c[2]);
          for (int s = 0; s < 3; ++s) {
            ++c[static_cast<std::size_t>(p[static_cast<std::size_t>(s)])];
            v[static_cast<std::size_t>(s + 1)] = vid(c[0], c[1], c[2]);
          }
          tree->add_root(v);
        }
  return tree;
}

/// Tree with a single root tetrahedron; all four vertices are boundary vertices.
inline std::shared_ptr<TetTree> make_single_tet_tree(const std::array<Vec3, 4>& v) {
  auto tree = std::make_shared<TetTree>();
  std::array<VertexId, 4> ids{};
  for (std::size_t i = 0; i < 4; ++i) ids[i] = tree->add_vertex(v[i]);
  tree->add_root(ids);
  return tree;
}

/// Interval [lo, hi] split into n equal root intervals.
inline std::shared_ptr<IntervalTree> make_interval_tree(double lo, double hi, int n) {
  MMKS_REQUIRE(hi > lo && n >= 1, "make_interval_tree: need lo < hi and n >= 1");
  auto tree = std::make_shared<IntervalTree>();
  tree->set_interval(lo, hi);
  for (int i = 0; i <= n; ++i) tree->add_vertex(i == n ? hi : lo + (hi - lo) * i / n);
  for (int i = 0; i < n; ++i) tree->add_root({static_cast<VertexId>(i), static_cast<VertexId>(i + 1)});
  return tree;
}

/// A mesh: a set of leaves of the shared tree, stored in tree preorder.
template <class Cell>
class MeshView {
 public:
  using Tree = GeometryTree<Cell>;

  MeshView() = default;

  /// The coarsest view: all roots.
  static MeshView roots(std::shared_ptr<Tree> tree) {
    std::vector<std::uint8_t> in(tree->size(), 0);
    for (auto r : tree->roots()) in[r] = 1;
    return from_membership(std::move(tree), std::move(in), 0);
  }

  /// Builds a view from a membership flag per node (flags beyond tree size are ignored).
  static MeshView from_membership(std::shared_ptr<Tree> tree, std::vector<std::uint8_t> in, std::uint64_t generation) {
    MeshView v;
    in.resize(tree->size(), 0);
    v.tree_ = std::move(tree);
    v.member_ = std::move(in);
    v.generation_ = generation;
    v.collect_leaves();
    return v;
  }

  const Tree& tree() const { return *tree_; }
  const std::shared_ptr<Tree>& tree_ptr() const { return tree_; }
  const std::vector<NodeId>& leaves() const { return leaves_; }
  std::size_t size() const { return leaves_.size(); }
  std::uint64_t generation() const { return generation_; }
  bool valid() const { return static_cast<bool>(tree_); }

  bool contains(NodeId id) const { return id < member_.size() && member_[id] != 0; }
  const std::vector<std::uint8_t>& membership() const { return member_; }

  /// Leaf of this view containing p; hint may be any node whose region contains p.
  NodeId locate(const typename Cell::Point& p, NodeId hint = kNone) const {
    NodeId n = hint;
    if (n == kNone) {
      n = tree_->locate_root(p);
      if (n == kNone) throw OutOfDomain("locate: point outside the domain");
    } else {
      for (NodeId a = n; a != kNone; a = tree_->parent(a))
        if (contains(a)) return a;
    }
    while (!contains(n)) {
      MMKS_REQUIRE(tree_->has_children(n), "locate: view does not cover the point");
      n = tree_->child_containing(n, p);
    }
    return n;
  }

  /// Leaf of this view that equals or contains node id, or kNone if the view
  /// is finer than id there.
  NodeId covering_leaf(NodeId id) const {
    for (NodeId a = id; a != kNone; a = tree_->parent(a))
      if (contains(a)) return a;
    return kNone;
  }

  double total_measure() const {
    double s = 0.0, c = 0.0;
    for (auto l : leaves_) {
      const double x = tree_->measure(l);
      const double t = s + x;
      c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
      s = t;
    }
    return s + c;
  }

 private:
  void collect_leaves() {
    leaves_.clear();
    std::vector<NodeId> stack;
    for (auto it = tree_->roots().rbegin(); it != tree_->roots().rend(); ++it) stack.push_back(*it);
    while (!stack.empty()) {
      const NodeId n = stack.back();
      stack.pop_back();
      if (contains(n)) {
        leaves_.push_back(n);
        continue;
      }
      MMKS_REQUIRE(tree_->has_children(n), "MeshView: leaves do not cover the domain");
      for (int k = Cell::kChildren - 1; k >= 0; --k) stack.push_back(tree_->child(n, k));
    }
  }

  std::shared_ptr<Tree> tree_;
  std::vector<std::uint8_t> member_;
  std::vector<NodeId> leaves_;
  std::uint64_t generation_ = 0;
};

using TetMesh = MeshView<TetCell>;
using IntervalMesh = MeshView<IntervalCell>;

namespace detail {

/// Flags each vertex used by some leaf of the membership set.
template <class Cell>
std::vector<std::uint8_t> vertex_presence(const GeometryTree<Cell>& tree, const std::vector<std::uint8_t>& in) {
  std::vector<std::uint8_t> present(tree.n_vertices(), 0);
  for (std::size_t id = 0; id < in.size(); ++id)
    if (in[id])
      for (auto v : tree.node(static_cast<NodeId>(id)).vertices) present[v] = 1;
  return present;
}

inline bool present_mid(const TetTree& tree, const std::vector<std::uint8_t>& present, VertexId a, VertexId b,
                        VertexId* out = nullptr) {
  const auto m = tree.find_midpoint(a, b);
  if (out) *out = m;
  return m != kNone && present[m];
}

}  // namespace detail

/// Edge mask of hanging midpoints on a leaf, or nullopt-like Irregular when
/// deeper (two-level) hanging points touch the leaf.
inline LeafPattern leaf_pattern(const TetTree& tree, const std::vector<std::uint8_t>& present, NodeId id,
                                unsigned* mask_out = nullptr) {
  const auto& v = tree.node(id).vertices;
  unsigned mask = 0;
  std::array<VertexId, 6> mids{};
  for (int e = 0; e < 6; ++e) {
    const auto a = v[static_cast<std::size_t>(kTetEdges[static_cast<std::size_t>(e)][0])];
    const auto b = v[static_cast<std::size_t>(kTetEdges[static_cast<std::size_t>(e)][1])];
    VertexId m = kNone;
    if (detail::present_mid(tree, present, a, b, &m)) {
      mask |= 1u << e;
      mids[static_cast<std::size_t>(e)] = m;
      if (detail::present_mid(tree, present, a, m) || detail::present_mid(tree, present, m, b)) {
        if (mask_out) *mask_out = mask;
        return LeafPattern::Irregular;
      }
    }
  }
  for (unsigned fm : kTetFaceEdgeMask) {
    const unsigned on = mask & fm;
    if (std::popcount(on) < 2) continue;
    for (int e1 = 0; e1 < 6; ++e1)
      for (int e2 = e1 + 1; e2 < 6; ++e2)
        if ((on >> e1 & 1u) && (on >> e2 & 1u) &&
            detail::present_mid(tree, present, mids[static_cast<std::size_t>(e1)], mids[static_cast<std::size_t>(e2)])) {
          if (mask_out) *mask_out = mask;
          return LeafPattern::Irregular;
        }
  }
  if (mask_out) *mask_out = mask;
  return classify_edge_mask(mask);
}

namespace detail {

template <class Cell>
void split(GeometryTree<Cell>& tree, std::vector<std::uint8_t>& in, NodeId id) {
  tree.ensure_children(id);
  if (in.size() < tree.size()) in.resize(tree.size(), 0);
  in[id] = 0;
  for (int k = 0; k < Cell::kChildren; ++k) in[tree.child(id, k)] = 1;
}

/// Leaves that violate closure (3-D: hanging pattern; 1-D: neighbor levels
/// differing by more than one).
template <class Cell>
std::vector<NodeId> closure_violations(const GeometryTree<Cell>& tree, const std::vector<std::uint8_t>& in) {
  std::vector<NodeId> bad;
  if constexpr (Cell::kDim == 3) {
    const auto present = vertex_presence(tree, in);
    for (std::size_t id = 0; id < in.size(); ++id)
      if (in[id] && leaf_pattern(tree, present, static_cast<NodeId>(id)) == LeafPattern::Irregular)
        bad.push_back(static_cast<NodeId>(id));
  } else {
    // Level of the leaf on each side of every vertex.
    std::vector<int> left(tree.n_vertices(), -1), right(tree.n_vertices(), -1);
    for (std::size_t id = 0; id < in.size(); ++id) {
      if (!in[id]) continue;
      const auto& n = tree.node(static_cast<NodeId>(id));
      right[n.vertices[0]] = n.level;
      left[n.vertices[1]] = n.level;
    }
    for (std::size_t id = 0; id < in.size(); ++id) {
      if (!in[id]) continue;
      const auto& n = tree.node(static_cast<NodeId>(id));
      const int l = n.level;
      if (left[n.vertices[0]] > l + 1 || right[n.vertices[1]] > l + 1) bad.push_back(static_cast<NodeId>(id));
    }
  }
  return bad;
}

template <class Cell>
void close(GeometryTree<Cell>& tree, std::vector<std::uint8_t>& in) {
  while (true) {
    const auto bad = closure_violations(tree, in);
    if (bad.empty()) break;
    for (auto id : bad) split(tree, in, id);
  }
}

}  // namespace detail

/// Replaces each marked leaf by its children, then refines further where the
/// result would not be closed. The generation counter is always incremented.
template <class Cell>
MeshView<Cell> refine(const MeshView<Cell>& mesh, std::span<const NodeId> marked) {
  auto tree = mesh.tree_ptr();
  std::vector<std::uint8_t> in = mesh.membership();
  for (auto id : marked) MMKS_REQUIRE(mesh.contains(id), "refine: marked node is not a leaf of this view");
  for (auto id : marked)
    if (in[id]) detail::split(*tree, in, id);
  detail::close(*tree, in);
  return MeshView<Cell>::from_membership(tree, std::move(in), mesh.generation() + 1);
}

template <class Cell>
MeshView<Cell> refine_uniform(const MeshView<Cell>& mesh) {
  return refine(mesh, std::span<const NodeId>(mesh.leaves()));
}

template <class Cell>
struct CoarsenResult {
  MeshView<Cell> mesh;
  std::vector<NodeId> skipped;  // parents whose coarsening was not applied
};

/// Replaces complete marked sibling sets by their parent. Parents with a
/// partially marked sibling set, or whose release would break closure, are
/// skipped and reported.
template <class Cell>
CoarsenResult<Cell> coarsen(const MeshView<Cell>& mesh, std::span<const NodeId> marked) {
  const auto& tree = mesh.tree();
  std::unordered_map<NodeId, int> count;
  for (auto id : marked) {
    MMKS_REQUIRE(mesh.contains(id), "coarsen: marked node is not a leaf of this view");
    const auto p = tree.parent(id);
    if (p != kNone) ++count[p];
  }
  CoarsenResult<Cell> out;
  std::vector<NodeId> candidates;
  for (const auto& [p, c] : count) {
    bool complete = c == Cell::kChildren;
    for (int k = 0; k < Cell::kChildren && complete; ++k) complete = mesh.contains(tree.child(p, k));
    if (complete) {
      candidates.push_back(p);
    } else {
      out.skipped.push_back(p);
    }
  }
  std::sort(candidates.begin(), candidates.end());

  std::vector<std::uint8_t> in = mesh.membership();
  auto apply = [&](NodeId p, bool on) {
    in[p] = on ? 1 : 0;
    for (int k = 0; k < Cell::kChildren; ++k) in[tree.child(p, k)] = on ? 0 : 1;
  };
  std::vector<std::uint8_t> active(tree.size(), 0);
  for (auto p : candidates) {
    apply(p, true);
    active[p] = 1;
  }

  // Undo coarsenings next to closure violations until none remain.
  for (int round = 0; round < 64; ++round) {
    const auto bad = detail::closure_violations(tree, in);
    if (bad.empty()) break;
    // Hanging vertices released by each active coarsening.
    std::unordered_map<VertexId, std::vector<NodeId>> by_vertex;
    for (auto p : candidates) {
      if (!active[p]) continue;
      const auto& v = tree.node(p).vertices;
      if constexpr (Cell::kDim == 3) {
        for (const auto& e : kTetEdges) {
          const auto m = tree.find_midpoint(v[static_cast<std::size_t>(e[0])], v[static_cast<std::size_t>(e[1])]);
          if (m != kNone) by_vertex[m].push_back(p);
        }
      } else {
        by_vertex[tree.find_midpoint(v[0], v[1])].push_back(p);
      }
    }
    bool undone = false;
    auto undo = [&](NodeId p) {
      if (!active[p]) return;
      active[p] = 0;
      apply(p, false);
      out.skipped.push_back(p);
      undone = true;
    };
    for (auto b : bad) {
      if (b < active.size() && active[b]) {
        undo(b);
        continue;
      }
      const auto& v = tree.node(b).vertices;
      std::vector<VertexId> touch;
      if constexpr (Cell::kDim == 3) {
        for (const auto& e : kTetEdges) {
          const auto m = tree.find_midpoint(v[static_cast<std::size_t>(e[0])], v[static_cast<std::size_t>(e[1])]);
          if (m != kNone) touch.push_back(m);
        }
      } else {
        touch.assign(v.begin(), v.end());
      }
      for (auto x : touch) {
        auto it = by_vertex.find(x);
        if (it == by_vertex.end()) continue;
        for (auto p : it->second) undo(p);
      }
    }
    if (!undone) break;
  }
  auto tree_ptr = mesh.tree_ptr();
  detail::close(*tree_ptr, in);
  std::sort(out.skipped.begin(), out.skipped.end());
  out.mesh = MeshView<Cell>::from_membership(tree_ptr, std::move(in), mesh.generation() + 1);
  return out;
}

/// All (leaf_a, leaf_b) pairs whose cells overlap, in tree preorder.
template <class Cell>
std::vector<std::pair<NodeId, NodeId>> common_cells(const MeshView<Cell>& a, const MeshView<Cell>& b) {
  MMKS_REQUIRE(a.tree_ptr() == b.tree_ptr(), "common_cells: views live on different trees");
  const auto& tree = a.tree();
  std::vector<std::pair<NodeId, NodeId>> out;
  std::vector<NodeId> stack;
  auto push_children = [&](NodeId n) {
    for (int k = Cell::kChildren - 1; k >= 0; --k) stack.push_back(tree.child(n, k));
  };
  // Leaves of `view` below n, in preorder.
  auto below = [&](const MeshView<Cell>& view, NodeId n, auto&& emit) {
    std::vector<NodeId> st{n};
    while (!st.empty()) {
      const NodeId x = st.back();
      st.pop_back();
      if (view.contains(x)) {
        emit(x);
        continue;
      }
      for (int k = Cell::kChildren - 1; k >= 0; --k) st.push_back(tree.child(x, k));
    }
  };
  for (auto it = tree.roots().rbegin(); it != tree.roots().rend(); ++it) stack.push_back(*it);
  while (!stack.empty()) {
    const NodeId n = stack.back();
    stack.pop_back();
    const bool ina = a.contains(n);
    const bool inb = b.contains(n);
    if (ina && inb) {
      out.emplace_back(n, n);
    } else if (ina) {
      below(b, n, [&](NodeId x) { out.emplace_back(n, x); });
    } else if (inb) {
      below(a, n, [&](NodeId x) { out.emplace_back(x, n); });
    } else {
      push_children(n);
    }
  }
  return out;
}

/// Finest-cell union of several views on one tree, closed.
template <class Cell>
MeshView<Cell> merge_meshes(std::span<const MeshView<Cell>> views) {
  if (views.empty()) throw ArityError("merge_meshes: empty view list");
  auto tree = views[0].tree_ptr();
  std::uint64_t gen = 0;
  for (const auto& v : views) {
    MMKS_REQUIRE(v.tree_ptr() == tree, "merge_meshes: views live on different trees");
    gen = std::max(gen, v.generation());
  }
  std::vector<std::uint8_t> in(tree->size(), 0);
  // A node is a merged leaf when every view has a leaf at or above it.
  struct Item {
    NodeId node;
    std::size_t covered;  // bitmask of views with a leaf at or above node
  };
  MMKS_REQUIRE(views.size() <= 63, "merge_meshes: at most 63 views");
  const std::size_t all = (std::size_t{1} << views.size()) - 1;
  std::vector<Item> stack;
  for (auto r : tree->roots()) stack.push_back({r, 0});
  while (!stack.empty()) {
    auto [n, covered] = stack.back();
    stack.pop_back();
    for (std::size_t k = 0; k < views.size(); ++k)
      if (views[k].contains(n)) covered |= std::size_t{1} << k;
    if (covered == all) {
      in[n] = 1;
      continue;
    }
    for (int k = 0; k < Cell::kChildren; ++k) stack.push_back({tree->child(n, k), covered});
  }
  detail::close(*tree, in);
  return MeshView<Cell>::from_membership(tree, std::move(in), gen);
}

/// Face-adjacency 2:1 check used by tests: max level difference over pairs of
/// leaves sharing a vertex with overlapping closures is not computed here;
/// instead closure_violations() reports leaves with deeper hanging points.
template <class Cell>
bool is_closed(const MeshView<Cell>& mesh) {
  return detail::closure_violations(mesh.tree(), mesh.membership()).empty();
}

/// VTK legacy ASCII unstructured grid of the leaves (cell type 10).
inline void write_vtk(std::ostream& os, const TetMesh& mesh, const std::string& title = "mesh") {
  const auto& tree = mesh.tree();
  std::vector<std::int64_t> local(tree.n_vertices(), -1);
  std::vector<VertexId> order;
  for (auto l : mesh.leaves())
    for (auto v : tree.node(l).vertices)
      if (local[v] < 0) {
        local[v] = static_cast<std::int64_t>(order.size());
        order.push_back(v);
      }
  os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os.precision(17);
  os << "POINTS " << order.size() << " double\n";
  for (auto v : order) {
    const auto& p = tree.point(v);
    os << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
  }
  os << "CELLS " << mesh.size() << ' ' << 5 * mesh.size() << '\n';
  for (auto l : mesh.leaves()) {
    const auto& v = tree.node(l).vertices;
    os << 4 << ' ' << local[v[0]] << ' ' << local[v[1]] << ' ' << local[v[2]] << ' ' << local[v[3]] << '\n';
  }
  os << "CELL_TYPES " << mesh.size() << '\n';
  for (std::size_t i = 0; i < mesh.size(); ++i) os << "10\n";
}

}  // namespace mmks::hgt
