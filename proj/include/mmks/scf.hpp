#pragma once

// Self-consistent field driver: per-iteration staged solve of the split
// eigenproblems with one density mixing step after every group, and the outer
// mesh-adaptation loop.

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmks/adapt.hpp"
#include "mmks/error.hpp"
#include "mmks/fespace.hpp"
#include "mmks/hartree.hpp"
#include "mmks/hgt.hpp"
#include "mmks/ks.hpp"
#include "mmks/split.hpp"

namespace mmks::scf {

struct Options {
  double alpha = 0.618;
  double tol_density = 1e-6;  // tol₁
  double tol_energy = 1e-5;   // tol₂; infinity gives a single phase
  int max_scf_iterations = 60;
  int max_rounds = 8;
  ks::HamiltonianOptions hamiltonian;
  ks::EigenOptions eigen;
  hartree::Options poisson;
  adapt::IndicatorOptions indicator;
  adapt::MarkOptions marking;
  bool adapt_hartree_mesh = true;
  bool random_guess = false;
};

struct ScfState {
  std::vector<ks::EigenGroup> groups;
  std::vector<Field> rho;  // total density on each group mesh
  SpacePtr space_h;
  Field rho_h;
  Field phi;  // Hartree potential of rho_h
  bool phi_current = false;
  double alpha = 0.618;
  int iteration = 0;
  long density_updates = 0;
  std::vector<double> delta_rho_history;
  std::vector<double> energy_history;
  bool converged = false;

  std::vector<std::size_t> dofs() const {
    std::vector<std::size_t> d;
    for (const auto& g : groups) d.push_back(g.space->n_dofs());
    d.push_back(space_h->n_dofs());
    return d;
  }
  std::size_t total_dofs() const {
    const auto d = dofs();
    return std::accumulate(d.begin(), d.end(), std::size_t{0});
  }
};

/// α·old + (1 − α)·new per dof.
inline Field mix(const Field& old, const Field& fresh, double alpha) {
  require_current(old);
  require_current(fresh);
  MMKS_REQUIRE(old.space->uid() == fresh.space->uid(), "mix: densities live on different spaces");
  MMKS_REQUIRE(alpha > 0.0 && alpha < 1.0, "mix: alpha must lie in (0, 1)");
  Field out(old.space);
  for (std::size_t d = 0; d < out.size(); ++d) out.coeffs[d] = alpha * old.coeffs[d] + (1.0 - alpha) * fresh.coeffs[d];
  return out;
}

/// Discrete M-weighted L2 norm of a − b.
inline double mass_distance(const Field& a, const Field& b) {
  MMKS_REQUIRE(a.space->uid() == b.space->uid(), "mass_distance: fields live on different spaces");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.coeffs[i] - b.coeffs[i];
  const auto m = assemble_mass(*a.space);
  return std::sqrt(std::max(0.0, mass_norm2(m, d)));
}

inline void refresh_potential(ScfState& s, const Options& opt) {
  if (s.phi_current) return;
  if (opt.hamiltonian.interaction == ks::Interaction::None) {
    s.phi = Field(s.space_h);
  } else {
    s.phi = hartree::solve_hartree(s.rho_h, s.space_h, opt.poisson).phi;
  }
  s.phi_current = true;
}

/// Forms ρ_new from the current orbitals on every mesh, mixes it into the
/// stored densities and returns the M-norm of the change on group g's mesh.
inline double density_update(ScfState& s, std::size_t g) {
  MMKS_REQUIRE(g < s.groups.size(), "density_update: group index out of range");
  const Field before = s.rho[g];
  for (std::size_t m = 0; m < s.rho.size(); ++m) s.rho[m] = mix(s.rho[m], ks::compute_density(s.groups, s.rho[m].space), s.alpha);
  s.rho_h = mix(s.rho_h, ks::compute_density(s.groups, s.space_h), s.alpha);
  s.phi_current = false;
  ++s.density_updates;
  return mass_distance(s.rho[g], before);
}

inline double energy(ScfState& s, const Options& opt) {
  refresh_potential(s, opt);
  const bool full = opt.hamiltonian.interaction == ks::Interaction::Full;
  return ks::total_energy(s.groups, full ? &s.phi : nullptr, s.rho, opt.hamiltonian.interaction, opt.hamiltonian.quadrature_order).total;
}

/// Initial state: guess orbitals (M-normalized) on each group mesh, the
/// density they define on every mesh and its potential.
inline ScfState make_state(std::span<const ks::AtomSpec> atoms, const split::SplitPlan& plan, std::span<const TetMesh> group_meshes,
                           const TetMesh& hartree_mesh, const Options& opt) {
  MMKS_REQUIRE(group_meshes.size() == plan.n_groups(), "make_state: one mesh per group is required");
  const int n_e = ks::electron_count(atoms);
  const auto f = ks::occupations(n_e);
  ScfState s;
  s.alpha = opt.alpha;
  const auto all = static_cast<std::size_t>(plan.total());
  for (std::size_t g = 0; g < plan.n_groups(); ++g) {
    ks::EigenGroup grp;
    grp.index = static_cast<int>(g);
    grp.space = build_space(group_meshes[g]);
    const auto x = ks::initial_guess(*grp.space, atoms, all, opt.eigen.seed, opt.random_guess);
    const auto m = assemble_mass(*grp.space);
    const auto first = static_cast<std::size_t>(plan.first(g));
    for (int l = 0; l < plan.group_sizes[g]; ++l) {
      const std::size_t j = first + static_cast<std::size_t>(l);
      std::vector<double> c(x.col(j).begin(), x.col(j).end());
      const double nrm = std::sqrt(mass_norm2(m, c));
      MMKS_REQUIRE(nrm > 0.0, "make_state: initial orbital vanishes on the mesh");
      for (auto& v : c) v /= nrm;
      grp.orbitals.emplace_back(grp.space, std::move(c));
      grp.eigenvalues.push_back(0.0);
      grp.occupations.push_back(j < f.size() ? f[j] : 0.0);
    }
    s.groups.push_back(std::move(grp));
  }
  for (const auto& g : s.groups) s.rho.push_back(ks::compute_density(s.groups, g.space));
  s.space_h = build_space(hartree_mesh);
  s.rho_h = ks::compute_density(s.groups, s.space_h);
  refresh_potential(s, opt);
  return s;
}

struct IterationRecord {
  int round = 0;
  int iteration = 0;
  std::vector<double> stage_delta;  // change on the owning mesh after each group's update
  double delta_rho = 0.0;
  double energy = 0.0;
  int density_updates = 0;
  std::vector<double> eigenvalues;
  std::vector<std::size_t> dofs;
};

/// One SCF iteration. Groups are solved in index order; group g sees the
/// orbitals of groups 0..g−1 interpolated to its mesh as locked columns, and
/// every solve is followed by one density mixing step.
inline IterationRecord scf_iteration(ScfState& s, std::span<const ks::AtomSpec> atoms, const Options& opt) {
  IterationRecord rec;
  rec.iteration = ++s.iteration;
  const long updates0 = s.density_updates;
  for (std::size_t g = 0; g < s.groups.size(); ++g) {
    refresh_potential(s, opt);
    auto& grp = s.groups[g];
    const bool full = opt.hamiltonian.interaction == ks::Interaction::Full;
    const auto h = ks::assemble_hamiltonian(grp.space, atoms, full ? &s.phi : nullptr, full ? &s.rho[g] : nullptr, opt.hamiltonian);
    std::size_t n_locked = 0;
    for (std::size_t p = 0; p < g; ++p) n_locked += s.groups[p].orbitals.size();
    const std::size_t n = grp.space->n_dofs();
    dense::Matrix x0(n, n_locked + grp.orbitals.size(), 0.0);
    std::size_t j = 0;
    for (std::size_t p = 0; p < g; ++p)
      for (const auto& o : s.groups[p].orbitals) {
        const auto c = interpolate(o, grp.space).coeffs;
        std::copy(c.begin(), c.end(), x0.col(j++).begin());
      }
    for (const auto& o : grp.orbitals) std::copy(o.coeffs.begin(), o.coeffs.end(), x0.col(j++).begin());
    ks::EigenSolution sol;
    try {
      sol = ks::solve_eigen(h, *grp.space, x0, n_locked, opt.eigen);
    } catch (const SolverError& e) {
      throw SolverError("SCF iteration " + std::to_string(s.iteration) + ", group " + std::to_string(g) + ": " + e.what());
    }
    for (std::size_t l = 0; l < grp.orbitals.size(); ++l) {
      grp.orbitals[l] = Field(grp.space, std::move(sol.vectors[n_locked + l]));
      grp.eigenvalues[l] = sol.eigenvalues[n_locked + l];
    }
    rec.stage_delta.push_back(density_update(s, g));
  }
  rec.delta_rho = std::accumulate(rec.stage_delta.begin(), rec.stage_delta.end(), 0.0);
  rec.density_updates = static_cast<int>(s.density_updates - updates0);
  rec.energy = energy(s, opt);
  for (const auto& g : s.groups) rec.eigenvalues.insert(rec.eigenvalues.end(), g.eigenvalues.begin(), g.eigenvalues.end());
  rec.dofs = s.dofs();
  s.delta_rho_history.push_back(rec.delta_rho);
  s.energy_history.push_back(rec.energy);
  return rec;
}

/// Adapts every group mesh with its own indicator and the Hartree mesh with
/// the Poisson indicator, then moves all fields to the new spaces.
inline void adapt_meshes(ScfState& s, std::span<const ks::AtomSpec> atoms, const Options& opt) {
  refresh_potential(s, opt);
  auto iopt = opt.indicator;
  iopt.interaction = opt.hamiltonian.interaction;
  const bool full = opt.hamiltonian.interaction == ks::Interaction::Full;
  std::vector<TetMesh> meshes;
  for (std::size_t g = 0; g < s.groups.size(); ++g) {
    const auto eta = adapt::indicator_ks_group(s.groups[g], atoms, full ? &s.phi : nullptr, full ? &s.rho[g] : nullptr, iopt);
    meshes.push_back(adapt::apply_marks(s.groups[g].space->mesh(), adapt::mark(eta, opt.marking)));
  }
  std::optional<TetMesh> mesh_h;
  if (opt.adapt_hartree_mesh && full) {
    const auto eta = adapt::indicator_hartree(s.phi, s.rho_h, iopt);
    mesh_h = adapt::apply_marks(s.space_h->mesh(), adapt::mark(eta, opt.marking));
  }
  for (std::size_t g = 0; g < s.groups.size(); ++g) {
    auto& grp = s.groups[g];
    auto space = build_space(meshes[g]);
    for (auto& o : grp.orbitals) o = transfer_after_adapt(o, space);
    s.rho[g] = transfer_after_adapt(s.rho[g], space);
    grp.space = space;
  }
  if (mesh_h) {
    auto space = build_space(*mesh_h);
    s.rho_h = transfer_after_adapt(s.rho_h, space);
    s.space_h = space;
  }
  s.phi_current = false;
  refresh_potential(s, opt);
}

struct RoundRecord {
  int round = 0;
  int scf_iterations = 0;
  bool scf_converged = false;
  double delta_rho = 0.0;
  double energy = 0.0;
  std::vector<double> eigenvalues;
  std::vector<std::size_t> dofs;  // group meshes, then the Hartree mesh
};

struct Report {
  split::SplitPlan plan;
  std::vector<IterationRecord> iterations;
  std::vector<RoundRecord> rounds;
  bool converged = false;  // energy criterion met within the round budget
  double energy = 0.0;
  std::vector<double> eigenvalues;  // all groups, ascending
  std::vector<double> merged_eigenvalues;
  double orthogonality_error = 0.0;
  std::vector<std::size_t> dropped;
  std::size_t merged_dofs = 0;
  double splitting_factor = 0.0;
  std::optional<double> gap;
  std::optional<double> merged_gap;
  ScfState state;
};

using IterationCallback = std::function<void(const IterationRecord&)>;

/// Runs SCF iterations until Δρ < tol₁ (or the iteration budget).
inline RoundRecord run_scf(ScfState& s, std::span<const ks::AtomSpec> atoms, const Options& opt, int round,
                           std::vector<IterationRecord>* log = nullptr, const IterationCallback& cb = {}) {
  RoundRecord r;
  r.round = round;
  for (int it = 0; it < opt.max_scf_iterations; ++it) {
    auto rec = scf_iteration(s, atoms, opt);
    rec.round = round;
    ++r.scf_iterations;
    r.delta_rho = rec.delta_rho;
    r.energy = rec.energy;
    r.eigenvalues = rec.eigenvalues;
    if (cb) cb(rec);
    if (log) log->push_back(rec);
    if (rec.delta_rho < opt.tol_density) {
      r.scf_converged = true;
      break;
    }
  }
  r.dofs = s.dofs();
  return r;
}

/// Merged-space orthogonalization of the final orbitals and the derived
/// quantities (splitting factor, gaps).
inline void post_process(Report& rep, std::span<const ks::AtomSpec> atoms, const Options& opt) {
  auto& s = rep.state;
  refresh_potential(s, opt);
  std::vector<TetMesh> views;
  for (const auto& g : s.groups) views.push_back(g.space->mesh());
  const auto merged = build_space(split::merge_meshes(views));
  const bool full = opt.hamiltonian.interaction == ks::Interaction::Full;
  const Field rho_m = ks::compute_density(s.groups, merged);
  const auto h = ks::assemble_hamiltonian(merged, atoms, full ? &s.phi : nullptr, full ? &rho_m : nullptr, opt.hamiltonian);
  const auto res = split::orthogonalize_merged(s.groups, merged, h.a, h.m);
  rep.merged_eigenvalues = res.group.eigenvalues;
  rep.orthogonality_error = res.orthogonality_error;
  rep.dropped = res.dropped;
  rep.merged_dofs = merged->n_dofs();
  std::vector<double> counts;
  for (const auto& g : s.groups) counts.push_back(static_cast<double>(g.space->n_dofs()));
  rep.splitting_factor = split::splitting_factor(counts, static_cast<double>(merged->n_dofs()));
  rep.eigenvalues.clear();
  for (const auto& g : s.groups) rep.eigenvalues.insert(rep.eigenvalues.end(), g.eigenvalues.begin(), g.eigenvalues.end());
  std::sort(rep.eigenvalues.begin(), rep.eigenvalues.end());
  const int n_occ = rep.plan.n_occupied;
  if (static_cast<int>(rep.eigenvalues.size()) > n_occ) rep.gap = ks::homo_lumo_gap(rep.eigenvalues, n_occ);
  if (static_cast<int>(rep.merged_eigenvalues.size()) > n_occ) rep.merged_gap = ks::homo_lumo_gap(rep.merged_eigenvalues, n_occ);
}

/// The outer loop: SCF, then stop if |E − E_old| < tol₂ (or tol₂ is
/// infinite), otherwise adapt all meshes and repeat. The first round has no
/// E_old and always adapts unless tol₂ is infinite.
inline Report outer_loop(std::span<const ks::AtomSpec> atoms, const split::SplitPlan& plan, std::span<const TetMesh> group_meshes,
                         const TetMesh& hartree_mesh, const Options& opt, const IterationCallback& cb = {}) {
  MMKS_REQUIRE(opt.tol_density > 0.0 && opt.tol_energy > 0.0, "outer_loop: tolerances must be positive");
  MMKS_REQUIRE(opt.max_rounds >= 1, "outer_loop: need at least one round");
  Report rep;
  rep.plan = plan;
  rep.state = make_state(atoms, plan, group_meshes, hartree_mesh, opt);
  for (int round = 0;; ++round) {
    auto r = run_scf(rep.state, atoms, opt, round, &rep.iterations, cb);
    rep.rounds.push_back(r);
    rep.energy = r.energy;
    const bool small = round > 0 && std::abs(r.energy - rep.rounds[rep.rounds.size() - 2].energy) < opt.tol_energy;
    if (std::isinf(opt.tol_energy) || small) {
      rep.converged = r.scf_converged;
      break;
    }
    if (round + 1 >= opt.max_rounds) break;
    adapt_meshes(rep.state, atoms, opt);
  }
  rep.state.converged = rep.converged;
  post_process(rep, atoms, opt);
  return rep;
}

/// Same loop with every mesh starting from one initial mesh.
inline Report outer_loop(std::span<const ks::AtomSpec> atoms, const split::SplitPlan& plan, const TetMesh& initial,
                         const Options& opt, const IterationCallback& cb = {}) {
  std::vector<TetMesh> meshes(plan.n_groups(), initial);
  return outer_loop(atoms, plan, meshes, initial, opt, cb);
}

/// Coarse-mesh eigenvalues for eigenvalue-gap splitting: one group holding
/// N_occ orbitals, one SCF phase on the initial mesh.
inline std::vector<double> eigenvalue_hints(std::span<const ks::AtomSpec> atoms, const TetMesh& initial, const Options& opt) {
  split::SplitPlan single;
  single.strategy = split::Strategy::CoreValence;
  single.n_occupied = ks::occupied_count(ks::electron_count(atoms));
  single.group_sizes = {single.n_occupied};
  auto s = make_state(atoms, single, std::span<const TetMesh>(&initial, 1), initial, opt);
  const auto r = run_scf(s, atoms, opt, 0);
  return r.eigenvalues;
}

/// Box mesh with `levels` uniform refinements, then `nuclear_levels` extra
/// levels in balls around the nuclei whose radius halves at every level.
inline TetMesh initial_mesh(double half_width, int cells, int levels, std::span<const ks::AtomSpec> atoms = {},
                            int nuclear_levels = 0, double radius = 1.0) {
  auto tree = hgt::make_box_tree(half_width, cells);
  auto m = TetMesh::roots(tree);
  for (int i = 0; i < levels; ++i) m = hgt::refine_uniform(m);
  double r = radius;
  for (int i = 0; i < nuclear_levels; ++i, r *= 0.5) {
    std::vector<NodeId> marked;
    for (auto id : m.leaves()) {
      const auto c = tree->coordinates(id);
      const Vec3 centroid = 0.25 * (c[0] + c[1] + c[2] + c[3]);
      for (const auto& a : atoms) {
        bool hit = norm(centroid - a.position) < r;
        for (const auto& v : c) hit = hit || norm(v - a.position) < r;
        if (hit) {
          marked.push_back(id);
          break;
        }
      }
    }
    m = hgt::refine(m, std::span<const NodeId>(marked));
  }
  return m;
}

}  // namespace mmks::scf
