#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "mmks/adapt.hpp"
#include "mmks/hartree.hpp"

using namespace mmks;

namespace {

std::shared_ptr<hgt::TetTree> unit_tet() {
  return hgt::make_single_tet_tree({Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}});
}

TetMesh uniform_box(double l, int n, int levels) {
  auto m = TetMesh::roots(hgt::make_box_tree(l, n));
  for (int i = 0; i < levels; ++i) m = hgt::refine_uniform(m);
  return m;
}

ks::EigenGroup group_of(const SpacePtr& s, std::vector<Field> orbitals, std::vector<double> eps) {
  ks::EigenGroup g;
  g.space = s;
  g.orbitals = std::move(orbitals);
  g.eigenvalues = std::move(eps);
  g.occupations.assign(g.orbitals.size(), 2.0);
  return g;
}

adapt::ErrorField field_of(const SpacePtr& s, std::vector<double> eta) { return {s, std::move(eta), s->generation()}; }

const adapt::IndicatorOptions kRaw{adapt::Normalization::None, 2, ks::Interaction::None};

// Σ_e ½h_e J² |e| per leaf, with the normal derivative on each side taken by
// central differences of point evaluations.
std::vector<double> jump_oracle(const Field& f) {
  const auto& s = *f.space;
  std::map<std::array<std::int32_t, 3>, std::vector<std::size_t>> faces;
  for (std::size_t k = 0; k < s.n_elements(); ++k)
    for (int o = 0; o < 4; ++o) {
      std::array<std::int32_t, 3> key{};
      int c = 0;
      for (int i = 0; i < 4; ++i)
        if (i != o) key[static_cast<std::size_t>(c++)] = s.elements()[k].dofs[static_cast<std::size_t>(i)];
      std::sort(key.begin(), key.end());
      faces[key].push_back(k);
    }
  std::vector<double> out(s.mesh().size(), 0.0);
  for (const auto& [key, owners] : faces) {
    if (owners.size() != 2) continue;
    const Vec3 a = s.dof_point(static_cast<std::size_t>(key[0]));
    const Vec3 b = s.dof_point(static_cast<std::size_t>(key[1]));
    const Vec3 c = s.dof_point(static_cast<std::size_t>(key[2]));
    Vec3 n = cross(b - a, c - a);
    const double area = 0.5 * norm(n);
    n = (1.0 / norm(n)) * n;
    const Vec3 m = (1.0 / 3.0) * (a + b + c);
    const double he = std::max({norm(b - a), norm(c - a), norm(c - b)});
    const double d = 1e-6 * he;
    const double plus = (evaluate(f, m + (2.0 * d) * n) - evaluate(f, m + d * n)) / d;
    const double minus = (evaluate(f, m - d * n) - evaluate(f, m - (2.0 * d) * n)) / d;
    const double j = plus - minus;
    for (auto k : owners) out[static_cast<std::size_t>(s.elements()[k].leaf)] += 0.5 * he * j * j * area;
  }
  return out;
}

}  // namespace

TEST(Indicator, LinearFieldWithoutResidualVanishes) {
  auto s = build_space(uniform_box(1.0, 2, 1));
  const auto psi = interpolate_function(s, [](const Vec3& x) { return 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[2]; });
  const auto e = adapt::indicator_ks_group(group_of(s, {psi}, {0.0}), {}, nullptr, nullptr, kRaw);
  for (double x : e.eta) EXPECT_NEAR(x, 0.0, 1e-10);
}

TEST(Indicator, SingleElementIsPureResidual) {
  auto s = build_space(TetMesh::roots(unit_tet()));
  const Field one(s, std::vector<double>(4, 1.0));
  const auto e = adapt::indicator_ks_group(group_of(s, {one}, {1.0}), {}, nullptr, nullptr, kRaw);
  // h_K = √2, ‖(0 − 1)·1‖² = 1/6.
  EXPECT_NEAR(e.eta[0], std::sqrt(2.0 / 6.0), 1e-14);
}

TEST(Indicator, JumpTermsMatchFiniteDifferences) {
  auto tree = unit_tet();
  auto m = hgt::refine_uniform(TetMesh::roots(tree));
  m = hgt::refine(m, std::span<const NodeId>(std::vector<NodeId>{m.leaves()[2]}));
  auto s = build_space(m);
  const auto psi = interpolate_function(s, [](const Vec3& x) { return std::sin(3.0 * x[0]) * std::cos(2.0 * x[1]) + x[2] * x[2]; });
  const auto e = adapt::indicator_ks_group(group_of(s, {psi}, {0.0}), {}, nullptr, nullptr, kRaw);
  const auto oracle = jump_oracle(psi);
  double scale = 0.0;
  for (double x : oracle) scale = std::max(scale, x);
  for (std::size_t l = 0; l < e.size(); ++l) EXPECT_NEAR(e.eta[l] * e.eta[l], oracle[l], 1e-5 * scale);
}

TEST(Indicator, DecreasesUnderUniformRefinement) {
  double last = 1e300;
  for (int levels = 1; levels <= 3; ++levels) {
    auto s = build_space(uniform_box(3.0, 2, levels));
    const auto psi = interpolate_function(s, [](const Vec3& x) { return std::exp(-dot(x, x)); });
    const auto e = adapt::indicator_ks_group(group_of(s, {psi}, {-0.3}), {}, nullptr, nullptr, kRaw);
    EXPECT_LT(e.max(), last);
    last = e.max();
  }
}

TEST(Indicator, IdenticalGroupsGiveIdenticalFields) {
  auto s = build_space(uniform_box(3.0, 2, 1));
  const std::vector<ks::AtomSpec> atoms{{Vec3{0.2, 0.1, 0}, 1.0}};
  const auto a = interpolate_function(s, [](const Vec3& x) { return std::exp(-norm(x)); });
  const auto b = interpolate_function(s, [](const Vec3& x) { return x[0] * std::exp(-norm(x)); });
  const auto e1 = adapt::indicator_ks_group(group_of(s, {a, b}, {-0.5, -0.1}), atoms, nullptr, nullptr);
  const auto e2 = adapt::indicator_ks_group(group_of(s, {a, b}, {-0.5, -0.1}), atoms, nullptr, nullptr);
  EXPECT_EQ(e1.eta, e2.eta);
}

TEST(Indicator, NormalizationMakesRankingScaleInvariant) {
  auto s = build_space(uniform_box(3.0, 2, 1));
  const std::vector<ks::AtomSpec> atoms{{Vec3{0, 0, 0}, 2.0}};
  const auto a = interpolate_function(s, [](const Vec3& x) { return std::exp(-2.0 * norm(x)); });
  const auto b = interpolate_function(s, [](const Vec3& x) { return (1.0 - norm(x)) * std::exp(-norm(x)); });
  Field b_scaled = b;
  for (auto& c : b_scaled.coeffs) c *= -37.0;
  const auto e1 = adapt::indicator_ks_group(group_of(s, {a, b}, {-2.0, -0.5}), atoms, nullptr, nullptr);
  const auto e2 = adapt::indicator_ks_group(group_of(s, {a, b_scaled}, {-2.0, -0.5}), atoms, nullptr, nullptr);
  auto order = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto i, auto j) { return v[i] > v[j]; });
    return idx;
  };
  for (std::size_t i = 0; i < e1.size(); ++i) EXPECT_NEAR(e1.eta[i], e2.eta[i], 1e-12);
  EXPECT_EQ(order(e1.eta).front(), order(e2.eta).front());
}

TEST(Indicator, SignFlipLeavesIndicatorUnchanged) {
  auto s = build_space(uniform_box(3.0, 2, 1));
  const auto a = interpolate_function(s, [](const Vec3& x) { return std::exp(-norm(x)); });
  Field b = a;
  for (auto& c : b.coeffs) c = -c;
  const std::vector<ks::AtomSpec> atoms{{Vec3{0, 0, 0}, 1.0}};
  EXPECT_EQ(adapt::indicator_ks_group(group_of(s, {a}, {-0.4}), atoms, nullptr, nullptr).eta,
            adapt::indicator_ks_group(group_of(s, {b}, {-0.4}), atoms, nullptr, nullptr).eta);
}

TEST(Indicator, PotentialFromAnotherMesh) {
  auto tree = hgt::make_box_tree(3.0, 2);
  auto coarse = hgt::refine_uniform(TetMesh::roots(tree));
  auto fine = hgt::refine_uniform(coarse);
  auto sc = build_space(coarse);
  auto sf = build_space(fine);
  const auto psi = interpolate_function(sf, [](const Vec3& x) { return std::exp(-norm(x)); });
  const auto phi_c = interpolate_function(sc, [](const Vec3& x) { return 0.3 + 0.1 * x[0]; });
  const auto phi_f = interpolate(phi_c, sf);
  const auto g = group_of(sf, {psi}, {-0.2});
  const adapt::IndicatorOptions opt{adapt::Normalization::None, 2, ks::Interaction::Full};
  const auto e1 = adapt::indicator_ks_group(g, {}, &phi_c, nullptr, opt);
  const auto e2 = adapt::indicator_ks_group(g, {}, &phi_f, nullptr, opt);
  for (std::size_t i = 0; i < e1.size(); ++i) EXPECT_NEAR(e1.eta[i], e2.eta[i], 1e-12 * (1.0 + e2.eta[i]));
}

TEST(HartreeIndicator, ZeroDensityAndPotential) {
  auto s = build_space(uniform_box(2.0, 2, 1));
  const auto e = adapt::indicator_hartree(Field(s), Field(s));
  for (double x : e.eta) EXPECT_EQ(x, 0.0);
}

TEST(HartreeIndicator, ConstantDensityOnUniformMesh) {
  auto s = build_space(uniform_box(2.0, 2, 1));
  const Field rho(s, std::vector<double>(s->n_dofs(), 0.7));
  const auto e = adapt::indicator_hartree(Field(s), rho, {adapt::Normalization::None, 2, ks::Interaction::Full});
  const double r2 = std::pow(4.0 * std::numbers::pi * 0.7, 2);
  for (std::size_t l = 0; l < e.size(); ++l) {
    const auto x = s->tree().coordinates(s->mesh().leaves()[l]);
    double h = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = i + 1; j < 4; ++j) h = std::max(h, norm(x[i] - x[j]));
    const double expected = std::sqrt(h * h * r2 * volume(x[0], x[1], x[2], x[3]));
    EXPECT_NEAR(e.eta[l], expected, 1e-12 * expected);
  }
}

TEST(HartreeIndicator, GaussianPeaksAtTheCenter) {
  auto s = build_space(uniform_box(6.0, 4, 1));
  const auto rho = interpolate_function(s, [](const Vec3& x) { return std::exp(-2.0 * dot(x, x)); });
  const auto phi = hartree::solve_hartree(rho, s).phi;
  const auto e = adapt::indicator_hartree(phi, rho);
  const auto k = static_cast<std::size_t>(std::max_element(e.eta.begin(), e.eta.end()) - e.eta.begin());
  const auto c = s->tree().coordinates(s->mesh().leaves()[k]);
  double nearest = 1e300;
  for (auto id : s->mesh().leaves()) {
    const auto x = s->tree().coordinates(id);
    nearest = std::min(nearest, norm(0.25 * (x[0] + x[1] + x[2] + x[3])));
  }
  EXPECT_NEAR(norm(0.25 * (c[0] + c[1] + c[2] + c[3])), nearest, 1e-12);
  EXPECT_DOUBLE_EQ(e.max(), 1.0);
}

TEST(Combined, Examples) {
  auto s = build_space(TetMesh::roots(unit_tet()));
  const auto ks_eta = field_of(s, {3.0});
  EXPECT_DOUBLE_EQ(adapt::indicator_combined(ks_eta, field_of(s, {4.0})).eta[0], 5.0);
  EXPECT_DOUBLE_EQ(adapt::indicator_combined(ks_eta, field_of(s, {0.0})).eta[0], 3.0);
  EXPECT_DOUBLE_EQ(adapt::indicator_combined(ks_eta, ks_eta).eta[0], std::sqrt(2.0) * 3.0);
  EXPECT_EQ(adapt::indicator_combined(field_of(s, {4.0}), ks_eta).eta, adapt::indicator_combined(ks_eta, field_of(s, {4.0})).eta);
  auto other = build_space(TetMesh::roots(unit_tet()));
  EXPECT_THROW(adapt::indicator_combined(ks_eta, field_of(other, {1.0})), ContractViolation);
}

TEST(Mark, ZeroFractionRefinesEverything) {
  auto s = build_space(hgt::refine_uniform(TetMesh::roots(unit_tet())));
  std::vector<double> eta(s->mesh().size());
  std::iota(eta.begin(), eta.end(), 1.0);
  const auto m = adapt::mark(field_of(s, eta), {adapt::MarkMode::Maximum, 0.0, 0.05});
  EXPECT_EQ(m.refine, s->mesh().leaves());
  EXPECT_TRUE(m.coarsen.empty());
}

TEST(Mark, EqualIndicatorsRefineAllAndCoarsenNone) {
  auto s = build_space(hgt::refine_uniform(TetMesh::roots(unit_tet())));
  const auto m = adapt::mark(field_of(s, std::vector<double>(8, 0.3)));
  EXPECT_EQ(m.refine.size(), 8u);
  EXPECT_TRUE(m.coarsen.empty());
}

TEST(Mark, RefineLargeAndCoarsenCompleteSmallSiblings) {
  auto tree = unit_tet();
  auto m1 = hgt::refine_uniform(TetMesh::roots(tree));
  const NodeId t00 = tree->child(tree->roots()[0], 0);
  auto s = build_space(hgt::refine(m1, std::span<const NodeId>(std::vector<NodeId>{t00})));
  std::vector<double> eta(s->mesh().size(), 0.01);
  std::vector<NodeId> expected_refine;
  for (std::size_t i = 0; i < eta.size(); ++i) {
    const NodeId id = s->mesh().leaves()[i];
    if (tree->parent(id) == t00) continue;
    if (expected_refine.empty()) {
      eta[i] = 1.0;
    } else if (expected_refine.size() == 1) {
      eta[i] = 0.9;
    } else {
      continue;
    }
    expected_refine.push_back(id);
  }
  const auto m = adapt::mark(field_of(s, eta));
  EXPECT_EQ(m.refine, expected_refine);
  ASSERT_EQ(m.coarsen.size(), 8u);
  for (auto id : m.coarsen) EXPECT_EQ(tree->parent(id), t00);
  for (auto id : m.refine) EXPECT_EQ(std::count(m.coarsen.begin(), m.coarsen.end(), id), 0);
  const auto adapted = adapt::apply_marks(s->mesh(), m);
  EXPECT_TRUE(adapted.contains(t00));
  EXPECT_TRUE(hgt::is_closed(adapted));
}

TEST(Mark, AbsoluteThreshold) {
  auto s = build_space(hgt::refine_uniform(TetMesh::roots(unit_tet())));
  std::vector<double> eta{5e-6, 1e-7, 1e-7, 1e-7, 1e-7, 1e-7, 1e-7, 3e-6};
  adapt::MarkOptions opt;
  opt.mode = adapt::MarkMode::Absolute;
  opt.tol_ada = 4e-6;
  const auto m = adapt::mark(field_of(s, eta), opt);
  EXPECT_EQ(m.refine, std::vector<NodeId>{s->mesh().leaves()[0]});
  EXPECT_TRUE(m.coarsen.empty());
  eta[0] = 1e-7;
  eta[7] = 1e-7;
  EXPECT_EQ(adapt::mark(field_of(s, eta), opt).coarsen.size(), 8u);
}

TEST(Mark, LeafBudgetKeepsLargestIndicators) {
  auto s = build_space(uniform_box(1.0, 2, 1));
  std::vector<double> eta(s->mesh().size());
  for (std::size_t i = 0; i < eta.size(); ++i) eta[i] = 1.0 + 1e-3 * static_cast<double>((i * 37) % eta.size());
  adapt::MarkOptions opt;
  opt.refine_fraction = 0.0;
  opt.max_leaves = eta.size() + 7 * 5;
  const auto m = adapt::mark(field_of(s, eta), opt);
  ASSERT_EQ(m.refine.size(), 5u);
  std::vector<double> sorted = eta;
  std::sort(sorted.rbegin(), sorted.rend());
  for (auto id : m.refine) EXPECT_GE(eta[static_cast<std::size_t>(s->leaf_index(id))], sorted[4]);
}

TEST(Mark, StaleFieldRejected) {
  auto s = build_space(TetMesh::roots(unit_tet()));
  EXPECT_THROW(adapt::mark(field_of(s, {1.0, 2.0})), ContractViolation);
}
