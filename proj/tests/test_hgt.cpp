#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "mmks/hgt.hpp"

using namespace mmks;
using namespace mmks::hgt;

namespace {

std::shared_ptr<TetTree> unit_tet() {
  return make_single_tet_tree({Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}});
}

std::set<NodeId> leaf_set(const TetMesh& m) { return {m.leaves().begin(), m.leaves().end()}; }

TetMesh refine_ids(const TetMesh& m, std::vector<NodeId> ids) { return refine(m, std::span<const NodeId>(ids)); }

}  // namespace

TEST(Hgt, RefineSingleRootGivesEightChildren) {
  auto tree = unit_tet();
  const auto m0 = TetMesh::roots(tree);
  ASSERT_EQ(m0.size(), 1u);
  const auto m1 = refine_uniform(m0);
  EXPECT_EQ(m1.size(), 8u);
  EXPECT_EQ(m1.generation(), 1u);
  const NodeId root = tree->roots()[0];
  for (int k = 0; k < 8; ++k) {
    const auto c = tree->child(root, k);
    EXPECT_EQ(tree->level(c), 1);
    EXPECT_EQ(tree->parent(c), root);
    EXPECT_NEAR(tree->measure(c), tree->measure(root) / 8.0, 1e-15);
  }
  EXPECT_NEAR(m1.total_measure(), 1.0 / 6.0, 1e-15);
}

TEST(Hgt, LocalRefinementOfFirstChild) {
  auto tree = unit_tet();
  const auto m1 = refine_uniform(TetMesh::roots(tree));
  const NodeId t00 = tree->child(tree->roots()[0], 0);
  const auto m2 = refine_ids(m1, {t00});
  EXPECT_EQ(m2.size(), 15u);
  std::set<NodeId> expected;
  for (int k = 0; k < 8; ++k) expected.insert(tree->child(t00, k));
  for (int k = 1; k < 8; ++k) expected.insert(tree->child(tree->roots()[0], k));
  EXPECT_EQ(leaf_set(m2), expected);
  EXPECT_TRUE(is_closed(m2));
}

TEST(Hgt, EmptyMarkBumpsGeneration) {
  auto tree = unit_tet();
  const auto m1 = refine_uniform(TetMesh::roots(tree));
  const auto m2 = refine_ids(m1, {});
  EXPECT_EQ(leaf_set(m1), leaf_set(m2));
  EXPECT_EQ(m2.generation(), m1.generation() + 1);
}

TEST(Hgt, RefineRejectsNonLeaf) {
  auto tree = unit_tet();
  const auto m1 = refine_uniform(TetMesh::roots(tree));
  EXPECT_THROW(refine_ids(m1, {tree->roots()[0]}), ContractViolation);
}

TEST(Hgt, CoarsenExamples) {
  auto tree = unit_tet();
  const NodeId root = tree->roots()[0];
  const auto m1 = refine_uniform(TetMesh::roots(tree));
  auto all = coarsen(m1, std::span<const NodeId>(m1.leaves()));
  EXPECT_EQ(all.mesh.size(), 1u);
  EXPECT_TRUE(all.skipped.empty());

  const NodeId t00 = tree->child(root, 0);
  const auto m2 = refine_ids(m1, {t00});
  std::vector<NodeId> kids;
  for (int k = 0; k < 8; ++k) kids.push_back(tree->child(t00, k));
  auto back = coarsen(m2, std::span<const NodeId>(kids));
  EXPECT_EQ(leaf_set(back.mesh), leaf_set(m1));

  kids.pop_back();
  auto partial = coarsen(m2, std::span<const NodeId>(kids));
  EXPECT_EQ(leaf_set(partial.mesh), leaf_set(m2));
  ASSERT_EQ(partial.skipped.size(), 1u);
  EXPECT_EQ(partial.skipped[0], t00);
}

TEST(Hgt, RelationExamples) {
  auto tree = unit_tet();
  auto m = refine_uniform(TetMesh::roots(tree));
  const NodeId t0 = tree->roots()[0];
  const NodeId t00 = tree->child(t0, 0);
  m = refine_ids(m, {t00});
  const NodeId t003 = tree->child(t00, 3);
  EXPECT_EQ(relation(*tree, make_ref(*tree, t0), make_ref(*tree, t00)), Relation::Contains);
  EXPECT_EQ(relation(*tree, make_ref(*tree, t00), make_ref(*tree, t0)), Relation::ContainedBy);
  EXPECT_EQ(relation(*tree, make_ref(*tree, tree->child(t0, 1)), make_ref(*tree, tree->child(t0, 2))), Relation::Disjoint);
  EXPECT_EQ(relation(*tree, make_ref(*tree, t003), make_ref(*tree, t003)), Relation::Equal);
  EXPECT_EQ(relation(*tree, make_ref(*tree, t0), make_ref(*tree, t003)), Relation::Contains);
  EXPECT_EQ(relation(*tree, make_ref(*tree, tree->child(t0, 1)), make_ref(*tree, t003)), Relation::Disjoint);

  auto other = unit_tet();
  EXPECT_THROW(relation(*tree, make_ref(*tree, t0), make_ref(*other, other->roots()[0])), ContractViolation);
}

TEST(Hgt, CommonCellsExamples) {
  auto tree = unit_tet();
  const auto m0 = TetMesh::roots(tree);
  const auto m1 = refine_uniform(m0);
  const auto diag = common_cells(m1, m1);
  ASSERT_EQ(diag.size(), 8u);
  for (auto [a, b] : diag) EXPECT_EQ(a, b);

  const auto nest = common_cells(m0, m1);
  ASSERT_EQ(nest.size(), 8u);
  for (int k = 0; k < 8; ++k) {
    EXPECT_EQ(nest[static_cast<std::size_t>(k)].first, tree->roots()[0]);
    EXPECT_EQ(nest[static_cast<std::size_t>(k)].second, tree->child(tree->roots()[0], k));
  }

  // Two local refinements of the 8-leaf mesh: one at child 0, one at child 7.
  const NodeId t0 = tree->roots()[0];
  const auto c3 = refine_ids(m1, {tree->child(t0, 0)});
  const auto c4 = refine_ids(m1, {tree->child(t0, 7)});
  const auto pairs = common_cells(c3, c4);
  EXPECT_EQ(pairs.size(), 22u);
  double vol = 0.0;
  for (auto [a, b] : pairs) {
    const auto r = tree->relation(a, b);
    EXPECT_NE(r, Relation::Disjoint);
    vol += std::min(tree->measure(a), tree->measure(b));
    if (tree->parent(a) == tree->child(t0, 0)) EXPECT_EQ(b, tree->child(t0, 0));
    if (tree->parent(b) == tree->child(t0, 7)) EXPECT_EQ(a, tree->child(t0, 7));
  }
  EXPECT_NEAR(vol, 1.0 / 6.0, 1e-15);

  auto other = unit_tet();
  EXPECT_THROW(common_cells(m0, TetMesh::roots(other)), ContractViolation);
}

TEST(Hgt, MergeExamples) {
  auto tree = unit_tet();
  const NodeId t0 = tree->roots()[0];
  const auto m1 = refine_uniform(TetMesh::roots(tree));
  const auto c3 = refine_ids(m1, {tree->child(t0, 0)});
  const auto c4 = refine_ids(m1, {tree->child(t0, 7)});
  std::vector<TetMesh> pair{c3, c4};
  const auto merged = merge_meshes(std::span<const TetMesh>(pair));
  EXPECT_EQ(merged.size(), 22u);
  EXPECT_TRUE(is_closed(merged));

  std::vector<TetMesh> same{c3, c3};
  EXPECT_EQ(leaf_set(merge_meshes(std::span<const TetMesh>(same))), leaf_set(c3));
  std::vector<TetMesh> nested{m1, c3};
  EXPECT_EQ(leaf_set(merge_meshes(std::span<const TetMesh>(nested))), leaf_set(c3));
  EXPECT_THROW(merge_meshes(std::span<const TetMesh>()), ArityError);
}

TEST(Hgt, LocateFindsContainingLeaf) {
  auto tree = make_box_tree(1.0, 2);
  auto m = refine_uniform(TetMesh::roots(tree));
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p{u(rng), u(rng), u(rng)};
    const auto leaf = m.locate(p);
    EXPECT_GE(tree->inside_score(leaf, p), -1e-12);
  }
  EXPECT_THROW(m.locate(Vec3{2.0, 0.0, 0.0}), OutOfDomain);
}

TEST(Hgt, BoxTreeVolumeAndBoundary) {
  auto tree = make_box_tree(2.0, 3);
  const auto m = TetMesh::roots(tree);
  EXPECT_EQ(m.size(), 6u * 27u);
  EXPECT_NEAR(m.total_measure(), 64.0, 1e-12);
  EXPECT_TRUE(is_closed(m));
  EXPECT_TRUE(tree->on_boundary(0));
}

// Random adapt sequences keep the view closed, volume-preserving, and
// reversible; common_cells of any two views tiles the domain.
TEST(Hgt, RandomAdaptSequenceProperties) {
  auto tree = make_box_tree(1.0, 2);
  std::mt19937 rng(2024);
  auto mesh = TetMesh::roots(tree);
  std::vector<TetMesh> history{mesh};
  for (int step = 0; step < 4; ++step) {
    std::vector<NodeId> marks;
    for (auto l : mesh.leaves())
      if (rng() % 10 == 0) marks.push_back(l);
    const auto fine = refine(mesh, std::span<const NodeId>(marks));
    EXPECT_TRUE(is_closed(fine));
    EXPECT_NEAR(fine.total_measure(), 8.0, 8e-12);

    // Coarsen everything new: returns to the previous leaf set.
    std::vector<NodeId> fresh;
    for (auto l : fine.leaves())
      if (!mesh.contains(l)) fresh.push_back(l);
    std::vector<NodeId> undo_marks;
    auto current = fine;
    for (int round = 0; round < 10; ++round) {
      undo_marks.clear();
      for (auto l : current.leaves())
        if (!mesh.contains(l) && mesh.covering_leaf(l) != kNone) undo_marks.push_back(l);
      if (undo_marks.empty()) break;
      current = coarsen(current, std::span<const NodeId>(undo_marks)).mesh;
    }
    EXPECT_EQ(leaf_set(current), leaf_set(mesh));

    mesh = fine;
    history.push_back(mesh);
  }
  for (std::size_t i = 0; i < history.size(); ++i)
    for (std::size_t j = i; j < history.size(); j += 2) {
      std::vector<NodeId> finer;
      for (auto [a, b] : common_cells(history[i], history[j]))
        finer.push_back(tree->level(a) >= tree->level(b) ? a : b);
      std::vector<std::uint8_t> in(tree->size(), 0);
      for (auto f : finer) {
        EXPECT_EQ(in[f], 0) << "cell listed twice";
        in[f] = 1;
      }
      EXPECT_NEAR(TetMesh::from_membership(tree, in, 0).total_measure(), 8.0, 8e-12);
    }
}

TEST(Hgt, RefineThenCoarsenSameMarksIsIdentity) {
  auto tree = make_box_tree(1.0, 2);
  const auto mesh = refine_uniform(TetMesh::roots(tree));
  // A single mark on a uniform mesh needs no closure refinement.
  const NodeId mark = mesh.leaves()[17];
  const std::vector<NodeId> marks{mark};
  const auto fine = refine(mesh, std::span<const NodeId>(marks));
  ASSERT_EQ(fine.size(), mesh.size() + 7);
  std::vector<NodeId> kids;
  for (int k = 0; k < 8; ++k) kids.push_back(tree->child(mark, k));
  EXPECT_EQ(leaf_set(coarsen(fine, std::span<const NodeId>(kids)).mesh), leaf_set(mesh));
}

TEST(Hgt, CoarsenSkipsRequestsThatBreakClosure) {
  auto tree = make_box_tree(1.0, 1);
  auto mesh = refine_uniform(TetMesh::roots(tree));
  const NodeId a = mesh.leaves()[0];
  mesh = refine(mesh, std::span<const NodeId>(std::vector<NodeId>{a}));
  const NodeId a0 = tree->child(a, 0);
  mesh = refine(mesh, std::span<const NodeId>(std::vector<NodeId>{a0}));
  ASSERT_TRUE(is_closed(mesh));
  // Releasing the children of a while a0 is still refined would leave
  // two-level hanging points; closure forces a back to fine.
  std::vector<NodeId> marks;
  for (int k = 1; k < 8; ++k) marks.push_back(tree->child(a, k));
  for (int k = 0; k < 8; ++k) marks.push_back(tree->child(a0, k));
  auto r = coarsen(mesh, std::span<const NodeId>(marks));
  EXPECT_TRUE(is_closed(r.mesh));
  EXPECT_FALSE(r.skipped.empty());
}

TEST(Hgt, IntervalTreeRefineAndBalance) {
  auto tree = make_interval_tree(0.0, 1.0, 2);
  auto m = IntervalMesh::roots(tree);
  EXPECT_EQ(m.size(), 2u);
  for (int i = 0; i < 4; ++i) {
    const NodeId first = m.leaves().front();
    m = refine(m, std::span<const NodeId>(std::vector<NodeId>{first}));
  }
  EXPECT_TRUE(is_closed(m));
  EXPECT_NEAR(m.total_measure(), 1.0, 1e-15);
  // levels of neighbors differ by at most one
  for (std::size_t i = 1; i < m.size(); ++i)
    EXPECT_LE(std::abs(tree->level(m.leaves()[i]) - tree->level(m.leaves()[i - 1])), 1);
}

TEST(Hgt, VtkExportIsDeterministic) {
  auto tree = unit_tet();
  const auto m = refine_uniform(TetMesh::roots(tree));
  std::ostringstream a, b;
  write_vtk(a, m);
  write_vtk(b, m);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str().find("CELL_TYPES 8"), std::string::npos);
  EXPECT_NE(a.str().find("POINTS 10 double"), std::string::npos);
}
