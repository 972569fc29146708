#pragma once

// Eigenpair splitting plans, the splitting factor, mesh merging and the
// merged-space Rayleigh–Ritz post-processing.

#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmks/dense.hpp"
#include "mmks/error.hpp"
#include "mmks/fespace.hpp"
#include "mmks/hgt.hpp"
#include "mmks/ks.hpp"
#include "mmks/lobpcg.hpp"
#include "mmks/sparse.hpp"

namespace mmks::split {

enum class Strategy { CoreValence, EigenvalueGap, HomoLumo };

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::CoreValence: return "core-valence";
    case Strategy::EigenvalueGap: return "eigenvalue-gap";
    case Strategy::HomoLumo: return "homo-lumo";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "core-valence") return Strategy::CoreValence;
  if (s == "eigenvalue-gap") return Strategy::EigenvalueGap;
  if (s == "homo-lumo") return Strategy::HomoLumo;
  throw ConfigError("unknown strategy '" + s + "' (expected core-valence, eigenvalue-gap or homo-lumo)");
}

struct SplitPlan {
  Strategy strategy = Strategy::CoreValence;
  std::vector<int> group_sizes;
  int n_occupied = 0;
  bool lumo_group = false;  // last group holds the LUMO only

  int total() const { return std::accumulate(group_sizes.begin(), group_sizes.end(), 0); }
  std::size_t n_groups() const { return group_sizes.size(); }
  int first(std::size_t g) const { return std::accumulate(group_sizes.begin(), group_sizes.begin() + static_cast<std::ptrdiff_t>(g), 0); }
};

/// Core orbitals per element: Z ≤ 2 → 0, 3–10 → 1, 11–18 → 5.
inline int core_orbitals(double z) {
  const long iz = std::lround(z);
  if (iz < 1 || iz > 18) throw ConfigError("element with Z = " + std::to_string(iz) + " is not supported (1 <= Z <= 18)");
  if (iz <= 2) return 0;
  if (iz <= 10) return 1;
  return 5;
}

/// Group sizes for a strategy. EigenvalueGap splits the first N_occ hints
/// wherever ε_{l+1} − ε_l > θ(ε_p − ε_1).
inline SplitPlan make_plan(std::span<const ks::AtomSpec> atoms, Strategy strategy,
                           std::optional<std::span<const double>> hints = std::nullopt, double theta = 0.2) {
  MMKS_REQUIRE(!atoms.empty(), "make_plan: no atoms");
  SplitPlan plan;
  plan.strategy = strategy;
  const int n_occ = ks::occupied_count(ks::electron_count(atoms));
  plan.n_occupied = n_occ;
  int p1 = 0;
  for (const auto& a : atoms) p1 += core_orbitals(a.charge);
  if (strategy == Strategy::EigenvalueGap) {
    if (!hints) throw MissingHints("eigenvalue-gap splitting needs coarse-mesh eigenvalue hints");
    if (hints->size() < static_cast<std::size_t>(n_occ)) throw MissingHints("eigenvalue-gap splitting needs N_occ hints");
    const auto e = hints->subspan(0, static_cast<std::size_t>(n_occ));
    const double spread = e.back() - e.front();
    int start = 0;
    for (int l = 0; l + 1 < n_occ; ++l) {
      const auto i = static_cast<std::size_t>(l);
      MMKS_REQUIRE(e[i + 1] >= e[i], "make_plan: hints must be ascending");
      if (e[i + 1] - e[i] > theta * spread) {
        plan.group_sizes.push_back(l + 1 - start);
        start = l + 1;
      }
    }
    plan.group_sizes.push_back(n_occ - start);
    return plan;
  }
  MMKS_REQUIRE(p1 <= n_occ, "make_plan: more core orbitals than occupied orbitals");
  if (p1 == 0 || p1 == n_occ) {
    plan.group_sizes = {n_occ};
  } else {
    plan.group_sizes = {p1, n_occ - p1};
  }
  if (strategy == Strategy::HomoLumo) {
    plan.group_sizes.push_back(1);
    plan.lumo_group = true;
  }
  return plan;
}

/// sf = #merged / Σ_k #group_k.
inline double splitting_factor(std::span<const double> group_counts, double merged_count) {
  if (group_counts.empty()) throw ArityError("splitting_factor: empty group list");
  const double sum = std::accumulate(group_counts.begin(), group_counts.end(), 0.0);
  MMKS_REQUIRE(sum > 0.0, "splitting_factor: group counts must be positive");
  return merged_count / sum;
}

/// Same ratio with the dof counts of spaces built on the views.
inline double splitting_factor(std::span<const TetMesh> groups, const TetMesh& merged) {
  if (groups.empty()) throw ArityError("splitting_factor: empty group list");
  std::vector<double> counts;
  for (const auto& g : groups) counts.push_back(static_cast<double>(build_space(g)->n_dofs()));
  return splitting_factor(counts, static_cast<double>(build_space(merged)->n_dofs()));
}

inline TetMesh merge_meshes(std::span<const TetMesh> views) { return hgt::merge_meshes(views); }

struct MergedResult {
  ks::EigenGroup group;
  std::vector<std::size_t> dropped;  // input columns removed as numerically dependent
  double orthogonality_error = 0.0;  // max |ΨᵀMΨ − I|
};

/// Interpolates every group's orbitals to the merged space and solves the
/// small pencil (YᵀAY)C = (YᵀMY)CΛ. Returned orbitals are YC with ascending Λ.
inline MergedResult orthogonalize_merged(std::span<const ks::EigenGroup> groups, const SpacePtr& merged,
                                         const sparse::CsrMatrix& a, const sparse::CsrMatrix& m, double drop = 1e-10) {
  std::vector<std::vector<double>> cols;
  std::vector<double> occ;
  for (const auto& g : groups)
    for (std::size_t l = 0; l < g.orbitals.size(); ++l) {
      cols.push_back(interpolate(g.orbitals[l], merged).coeffs);
      occ.push_back(l < g.occupations.size() ? g.occupations[l] : 0.0);
    }
  MMKS_REQUIRE(!cols.empty(), "orthogonalize_merged: no orbitals");
  const std::size_t n = merged->n_dofs();
  dense::Matrix y(n, cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) std::copy(cols[j].begin(), cols[j].end(), y.col(j).begin());
  const auto rr = lobpcg::rayleigh_ritz(y, a, m, drop);
  MergedResult out;
  std::vector<std::uint8_t> kept(cols.size(), 0);
  for (auto k : rr.kept) kept[k] = 1;
  for (std::size_t j = 0; j < cols.size(); ++j)
    if (!kept[j]) out.dropped.push_back(j);
  out.group.space = merged;
  out.group.eigenvalues = rr.values;
  const std::size_t k = rr.kept.size();
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> v(n, 0.0);
    for (std::size_t i = 0; i < k; ++i) sparse::axpy(rr.c(i, j), y.col(rr.kept[i]), v);
    out.group.orbitals.emplace_back(merged, std::move(v));
    out.group.occupations.push_back(occ[j]);
  }
  std::vector<std::vector<double>> mv;
  for (const auto& o : out.group.orbitals) mv.push_back(m * o.coeffs);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      out.orthogonality_error = std::max(out.orthogonality_error, std::abs(sparse::dot(out.group.orbitals[i].coeffs, mv[j]) - (i == j ? 1.0 : 0.0)));
  return out;
}

}  // namespace mmks::split
