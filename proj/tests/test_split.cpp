#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "mmks/split.hpp"

using namespace mmks;
using ks::AtomSpec;

namespace {

std::vector<AtomSpec> molecule(std::initializer_list<double> charges) {
  std::vector<AtomSpec> atoms;
  double x = -1.0;
  for (double z : charges) {
    atoms.push_back({Vec3{x, 0.0, 0.0}, z});
    x += 0.7;
  }
  return atoms;
}

std::shared_ptr<hgt::TetTree> unit_tet() {
  return hgt::make_single_tet_tree({Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}});
}

TetMesh refine_one(const TetMesh& m, NodeId id) { return hgt::refine(m, std::span<const NodeId>(std::vector<NodeId>{id})); }

std::vector<double> dense_eigenvalues(const sparse::CsrMatrix& a_full, const sparse::CsrMatrix& m_full, const FESpace& s) {
  const auto a = a_full.restrict_to(s.interior_index());
  const auto m = m_full.restrict_to(s.interior_index());
  const auto n = static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd ea(n, n), em(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      ea(i, j) = a(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      em(i, j) = m(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    }
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(ea, em);
  return {es.eigenvalues().data(), es.eigenvalues().data() + n};
}

}  // namespace

TEST(Plan, CoreValenceTable) {
  EXPECT_EQ(split::make_plan(molecule({3, 1}), split::Strategy::CoreValence).group_sizes, (std::vector<int>{1, 1}));
  EXPECT_EQ(split::make_plan(molecule({1, 4, 1}), split::Strategy::CoreValence).group_sizes, (std::vector<int>{1, 2}));
  EXPECT_EQ(split::make_plan(molecule({1, 8, 1}), split::Strategy::CoreValence).group_sizes, (std::vector<int>{1, 4}));
  EXPECT_EQ(split::make_plan(molecule({6, 6, 6, 6, 6, 6, 1, 1, 1, 1, 1, 1}), split::Strategy::CoreValence).group_sizes,
            (std::vector<int>{6, 15}));
}

TEST(Plan, HomoLumoAddsLumoGroup) {
  const auto p = split::make_plan(molecule({3, 1}), split::Strategy::HomoLumo);
  EXPECT_EQ(p.group_sizes, (std::vector<int>{1, 1, 1}));
  EXPECT_TRUE(p.lumo_group);
  EXPECT_EQ(p.total(), 3);
  EXPECT_EQ(p.n_occupied, 2);
}

TEST(Plan, NoCoreOrbitalsGivesSingleGroup) {
  EXPECT_EQ(split::make_plan(molecule({1}), split::Strategy::CoreValence).group_sizes, (std::vector<int>{1}));
  EXPECT_EQ(split::make_plan(molecule({2}), split::Strategy::CoreValence).group_sizes, (std::vector<int>{1}));
  EXPECT_EQ(split::make_plan(molecule({1, 1}), split::Strategy::HomoLumo).group_sizes, (std::vector<int>{1, 1}));
}

TEST(Plan, HeavyElementRejected) {
  EXPECT_THROW(split::make_plan(molecule({19}), split::Strategy::CoreValence), ConfigError);
  EXPECT_EQ(split::core_orbitals(17), 5);
  EXPECT_EQ(split::core_orbitals(10), 1);
}

TEST(Plan, EigenvalueGapClusters) {
  const auto atoms = molecule({1, 8, 1});
  const std::vector<double> hints{-18.8, -0.91, -0.47, -0.32, -0.25, 0.05};
  EXPECT_EQ(split::make_plan(atoms, split::Strategy::EigenvalueGap, hints).group_sizes, (std::vector<int>{1, 4}));
  EXPECT_EQ(split::make_plan(atoms, split::Strategy::EigenvalueGap, hints, 1e-3).group_sizes, (std::vector<int>{1, 1, 1, 1, 1}));
  EXPECT_THROW(split::make_plan(atoms, split::Strategy::EigenvalueGap), MissingHints);
}

TEST(SplittingFactor, ReferenceCounts) {
  const std::vector<double> lih{2132602, 1997052};
  EXPECT_NEAR(split::splitting_factor(lih, 3780288), 0.915, 1e-3);
  const std::vector<double> beh2{2631201, 3454554};
  EXPECT_NEAR(split::splitting_factor(beh2, 5090969), 0.837, 1e-3);
  EXPECT_THROW(split::splitting_factor(std::vector<double>{}, 1.0), ArityError);
}

TEST(SplittingFactor, IdenticalMeshesGiveHalf) {
  auto m = hgt::refine_uniform(TetMesh::roots(unit_tet()));
  const std::vector<TetMesh> views{m, m};
  EXPECT_DOUBLE_EQ(split::splitting_factor(views, split::merge_meshes(views)), 0.5);
  EXPECT_THROW(split::splitting_factor(std::span<const TetMesh>{}, m), ArityError);
}

TEST(SplittingFactor, BoundsOnRandomViews) {
  auto tree = hgt::make_box_tree(1.0, 2);
  const auto base = TetMesh::roots(tree);
  std::mt19937 rng(5);
  for (int trial = 0; trial < 4; ++trial) {
    std::vector<TetMesh> views;
    for (int v = 0; v < 3; ++v) {
      auto m = base;
      for (int step = 0; step < 3; ++step) {
        std::vector<NodeId> marked;
        for (auto id : m.leaves())
          if (rng() % 5 == 0) marked.push_back(id);
        m = hgt::refine(m, std::span<const NodeId>(marked));
      }
      views.push_back(m);
    }
    const double sf = split::splitting_factor(views, split::merge_meshes(views));
    EXPECT_GE(sf, 1.0 / 3.0);
    EXPECT_LE(sf, 1.0);
  }
}

TEST(Merge, FigureTwoExample) {
  auto tree = unit_tet();
  const auto m1 = hgt::refine_uniform(TetMesh::roots(tree));
  const NodeId root = tree->roots()[0];
  const auto a = refine_one(m1, tree->child(root, 0));
  const auto b = refine_one(m1, tree->child(root, 7));
  const std::vector<TetMesh> views{a, b};
  const auto merged = split::merge_meshes(views);
  EXPECT_EQ(merged.size(), 22u);
  EXPECT_FALSE(merged.contains(tree->child(root, 0)));
  EXPECT_FALSE(merged.contains(tree->child(root, 7)));
}

TEST(Merge, IdempotentNestedCommutativeAssociative) {
  auto tree = hgt::make_box_tree(1.0, 1);
  const auto base = hgt::refine_uniform(TetMesh::roots(tree));
  const auto a = refine_one(base, base.leaves()[3]);
  const auto b = refine_one(base, base.leaves()[20]);
  const auto c = refine_one(a, a.leaves()[5]);
  auto merge2 = [](const TetMesh& x, const TetMesh& y) { return split::merge_meshes(std::vector<TetMesh>{x, y}); };
  EXPECT_EQ(merge2(a, a).leaves(), a.leaves());
  EXPECT_EQ(merge2(a, c).leaves(), c.leaves());
  EXPECT_EQ(merge2(a, b).leaves(), merge2(b, a).leaves());
  EXPECT_EQ(merge2(merge2(a, b), c).leaves(), merge2(a, merge2(b, c)).leaves());
}

TEST(Orthogonalize, ExactEigenvectorsAreUnchanged) {
  auto tree = hgt::make_box_tree(5.0, 2);
  auto s = build_space(hgt::refine_uniform(hgt::refine_uniform(TetMesh::roots(tree))));
  const std::vector<AtomSpec> atoms{{Vec3{0, 0, 0}, 1.0}};
  const auto h = ks::assemble_hamiltonian(s, atoms, nullptr, nullptr, {4, ks::Interaction::None});
  const auto sol = ks::solve_eigen(h, *s, ks::initial_guess(*s, atoms, 2), 0, {1e-11, 500, 5, 2});
  std::vector<ks::EigenGroup> groups(2);
  for (std::size_t g = 0; g < 2; ++g) {
    groups[g].space = s;
    groups[g].orbitals.emplace_back(s, sol.vectors[g]);
    groups[g].eigenvalues = {sol.eigenvalues[g]};
    groups[g].occupations = {2.0};
  }
  const auto r = split::orthogonalize_merged(groups, s, h.a, h.m);
  ASSERT_EQ(r.group.size(), 2u);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_NEAR(r.group.eigenvalues[j], sol.eigenvalues[j], 1e-9);
    double diff_plus = 0.0, diff_minus = 0.0;
    for (std::size_t d = 0; d < s->n_dofs(); ++d) {
      diff_plus = std::max(diff_plus, std::abs(r.group.orbitals[j].coeffs[d] - sol.vectors[j][d]));
      diff_minus = std::max(diff_minus, std::abs(r.group.orbitals[j].coeffs[d] + sol.vectors[j][d]));
    }
    EXPECT_LE(std::min(diff_plus, diff_minus), 1e-4);
  }
  EXPECT_LE(r.orthogonality_error, 1e-10);
}

TEST(Orthogonalize, RemovesInjectedOverlap) {
  auto tree = hgt::make_box_tree(4.0, 2);
  auto s = build_space(hgt::refine_uniform(TetMesh::roots(tree)));
  const auto m = assemble_mass(*s);
  const auto h = ks::assemble_hamiltonian(s, {}, nullptr, nullptr);
  auto a = interpolate_function(s, [](const Vec3& x) { return std::exp(-dot(x, x) / 4.0); });
  auto b = interpolate_function(s, [](const Vec3& x) { return x[0] * std::exp(-dot(x, x) / 4.0); });
  for (auto* f : {&a, &b}) {
    const double n = std::sqrt(mass_norm2(m, f->coeffs));
    for (auto& c : f->coeffs) c /= n;
  }
  // b ← (b + t a)/‖·‖ with overlap 0.1.
  const double t = 0.1 / std::sqrt(1.0 - 0.01);
  for (std::size_t d = 0; d < b.size(); ++d) b.coeffs[d] += t * a.coeffs[d];
  const double nb = std::sqrt(mass_norm2(m, b.coeffs));
  for (auto& c : b.coeffs) c /= nb;
  EXPECT_NEAR(sparse::dot(a.coeffs, m * b.coeffs), 0.1, 1e-12);
  std::vector<ks::EigenGroup> groups(2);
  groups[0].space = groups[1].space = s;
  groups[0].orbitals = {a};
  groups[1].orbitals = {b};
  groups[0].eigenvalues = groups[1].eigenvalues = {0.0};
  const auto r = split::orthogonalize_merged(groups, s, h.a, h.m);
  EXPECT_LE(r.orthogonality_error, 1e-10);
  EXPECT_TRUE(r.dropped.empty());
}

TEST(Orthogonalize, DependentColumnsAreDropped) {
  auto s = build_space(hgt::refine_uniform(TetMesh::roots(hgt::make_box_tree(2.0, 2))));
  const auto h = ks::assemble_hamiltonian(s, {}, nullptr, nullptr);
  const auto a = interpolate_function(s, [](const Vec3& x) { return 4.0 - dot(x, x); });
  std::vector<ks::EigenGroup> groups(2);
  groups[0].space = groups[1].space = s;
  groups[0].orbitals = {a};
  groups[1].orbitals = {a};
  groups[0].eigenvalues = groups[1].eigenvalues = {0.0};
  const auto r = split::orthogonalize_merged(groups, s, h.a, h.m);
  EXPECT_EQ(r.group.size(), 1u);
  EXPECT_EQ(r.dropped.size(), 1u);
}

TEST(Orthogonalize, VariationalSandwich) {
  // Two groups on differently refined meshes, post-processed on the merge.
  auto tree = hgt::make_box_tree(5.0, 2);
  const auto base = hgt::refine_uniform(TetMesh::roots(tree));
  const auto m1 = refine_one(base, base.locate(Vec3{0.1, 0.1, 0.1}));
  const auto m2 = refine_one(base, base.locate(Vec3{-1.5, 1.2, 0.4}));
  const std::vector<AtomSpec> atoms{{Vec3{0, 0, 0}, 1.0}};
  std::vector<ks::EigenGroup> groups(2);
  std::vector<TetMesh> views{m1, m2};
  double pre_max = -1e300;
  for (std::size_t g = 0; g < 2; ++g) {
    auto s = build_space(views[g]);
    const auto h = ks::assemble_hamiltonian(s, atoms, nullptr, nullptr, {4, ks::Interaction::None});
    const auto sol = ks::solve_eigen(h, *s, ks::initial_guess(*s, atoms, 2), 0, {1e-10, 500, 5, 4});
    groups[g].space = s;
    groups[g].orbitals.emplace_back(s, sol.vectors[g]);
    groups[g].eigenvalues = {sol.eigenvalues[g]};
    groups[g].occupations = {2.0};
    pre_max = std::max(pre_max, sol.eigenvalues[g]);
  }
  auto merged = build_space(split::merge_meshes(views));
  const auto h = ks::assemble_hamiltonian(merged, atoms, nullptr, nullptr, {4, ks::Interaction::None});
  const auto r = split::orthogonalize_merged(groups, merged, h.a, h.m);
  const auto oracle = dense_eigenvalues(h.a, h.m, *merged);
  ASSERT_EQ(r.group.size(), 2u);
  EXPECT_GE(r.group.eigenvalues[0], oracle[0] - 1e-8);
  EXPECT_LE(r.group.eigenvalues[1], pre_max + 1e-6);
  EXPECT_LE(r.orthogonality_error, 1e-10);
}
