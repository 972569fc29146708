#pragma once

// Run configuration (INI with environment overrides), CSV logs and the binary
// checkpoint container.

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "mmks/adapt.hpp"
#include "mmks/error.hpp"
#include "mmks/scf.hpp"
#include "mmks/split.hpp"

namespace mmks::io {

inline const std::vector<std::string>& element_symbols() {
  static const std::vector<std::string> s{"H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",
                                          "Ne", "Na", "Mg", "Al", "Si", "P",  "S",  "Cl", "Ar"};
  return s;
}

/// Nuclear charge from a symbol ("Li") or a number ("3").
inline double parse_element(const std::string& tok) {
  const auto& s = element_symbols();
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i] == tok) return static_cast<double>(i + 1);
  char* end = nullptr;
  const long z = std::strtol(tok.c_str(), &end, 10);
  if (end && *end == '\0' && !tok.empty()) {
    if (z < 1 || z > 18) throw ConfigError("element Z = " + tok + " is not supported (1 <= Z <= 18)");
    return static_cast<double>(z);
  }
  throw ConfigError("unknown element '" + tok + "'");
}

/// "Li 0 0 0; H 0 0 3.015"
inline std::vector<ks::AtomSpec> parse_atoms(const std::string& text) {
  std::vector<ks::AtomSpec> atoms;
  std::stringstream all(text);
  std::string item;
  while (std::getline(all, item, ';')) {
    std::stringstream is(item);
    std::string sym;
    if (!(is >> sym)) continue;
    ks::AtomSpec a;
    a.charge = parse_element(sym);
    if (!(is >> a.position[0] >> a.position[1] >> a.position[2])) throw ConfigError("system.atoms: expected 'symbol x y z' in '" + item + "'");
    std::string extra;
    if (is >> extra) throw ConfigError("system.atoms: trailing text in '" + item + "'");
    atoms.push_back(a);
  }
  if (atoms.empty()) throw ConfigError("system.atoms: no atoms given");
  return atoms;
}

inline std::string format_atoms(const std::vector<ks::AtomSpec>& atoms) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (i) os << "; ";
    const auto z = static_cast<std::size_t>(std::lround(atoms[i].charge));
    os << element_symbols()[z - 1] << ' ' << atoms[i].position[0] << ' ' << atoms[i].position[1] << ' ' << atoms[i].position[2];
  }
  return os.str();
}

struct RunConfig {
  std::vector<ks::AtomSpec> atoms{{{0, 0, 0}, 1.0}};
  double box_half_width = 10.0;
  int cells = 2;
  int levels = 1;
  int nuclear_levels = 2;
  double nuclear_radius = 2.0;
  split::Strategy strategy = split::Strategy::CoreValence;
  double theta = 0.2;
  scf::Options scf;
  std::string output_directory = "mmks_out";
  bool write_vtk = true;
  bool write_checkpoint = true;
};

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

inline std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline double to_double(const std::string& key, const std::string& v) {
  const auto l = lower(v);
  if (l == "inf" || l == "infinity") return std::numeric_limits<double>::infinity();
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

inline long to_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  const auto l = lower(v);
  if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
  if (l == "false" || l == "0" || l == "no" || l == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

/// One accessor per config key: reads the current value as text and writes
/// a new value parsed from text.
struct Key {
  std::string section, name, help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

inline std::vector<Key> schema() {
  using R = RunConfig;
  std::vector<Key> k;
  auto real = [&](std::string sec, std::string name, std::string help, auto getter) {
    k.push_back({sec, name, help, [getter](const R& c) { return fmt(getter(const_cast<R&>(c))); },
                 [getter](R& c, const std::string& key, const std::string& v) { getter(c) = to_double(key, v); }});
  };
  auto integer = [&](std::string sec, std::string name, std::string help, auto getter) {
    k.push_back({sec, name, help, [getter](const R& c) { return std::to_string(getter(const_cast<R&>(c))); },
                 [getter](R& c, const std::string& key, const std::string& v) {
                   using T = std::remove_reference_t<decltype(getter(c))>;
                   const long x = to_long(key, v);
                   if constexpr (std::is_unsigned_v<T>)
                     if (x < 0) throw ConfigError(key + ": must be nonnegative");
                   getter(c) = static_cast<T>(x);
                 }});
  };
  auto boolean = [&](std::string sec, std::string name, std::string help, auto getter) {
    k.push_back({sec, name, help, [getter](const R& c) { return std::string(getter(const_cast<R&>(c)) ? "true" : "false"); },
                 [getter](R& c, const std::string& key, const std::string& v) { getter(c) = to_bool(key, v); }});
  };
  k.push_back({"system", "atoms", "list of 'symbol x y z' separated by ';' (Bohr)", [](const R& c) { return format_atoms(c.atoms); },
               [](R& c, const std::string&, const std::string& v) { c.atoms = parse_atoms(v); }});
  real("system", "box_half_width", "computational box [-L, L]^3", [](R& c) -> double& { return c.box_half_width; });
  integer("system", "cells", "coarse grid cells per axis (6 root tetrahedra each)", [](R& c) -> int& { return c.cells; });
  integer("system", "levels", "uniform refinements of the coarse grid", [](R& c) -> int& { return c.levels; });
  integer("system", "nuclear_levels", "extra refinements around nuclei", [](R& c) -> int& { return c.nuclear_levels; });
  real("system", "nuclear_radius", "radius of the first nuclear refinement ball (halves per level)", [](R& c) -> double& { return c.nuclear_radius; });
  k.push_back({"split", "strategy", "core-valence, eigenvalue-gap or homo-lumo", [](const R& c) { return std::string(split::to_string(c.strategy)); },
               [](R& c, const std::string&, const std::string& v) { c.strategy = split::parse_strategy(v); }});
  real("split", "theta", "relative gap threshold for eigenvalue-gap splitting", [](R& c) -> double& { return c.theta; });
  real("scf", "alpha", "density mixing factor", [](R& c) -> double& { return c.scf.alpha; });
  real("scf", "tol_density", "SCF stop: sum of density changes (M-norm)", [](R& c) -> double& { return c.scf.tol_density; });
  real("scf", "tol_energy", "adaptation stop: |E - E_old| (inf: one phase)", [](R& c) -> double& { return c.scf.tol_energy; });
  integer("scf", "max_iterations", "SCF iterations per adaptation round", [](R& c) -> int& { return c.scf.max_scf_iterations; });
  integer("scf", "max_rounds", "adaptation rounds", [](R& c) -> int& { return c.scf.max_rounds; });
  k.push_back({"scf", "interaction", "full (Hartree + LDA) or none (bare nuclei)",
               [](const R& c) { return std::string(c.scf.hamiltonian.interaction == ks::Interaction::Full ? "full" : "none"); },
               [](R& c, const std::string& key, const std::string& v) {
                 if (v == "full") c.scf.hamiltonian.interaction = ks::Interaction::Full;
                 else if (v == "none") c.scf.hamiltonian.interaction = ks::Interaction::None;
                 else throw ConfigError(key + ": expected full or none, got '" + v + "'");
               }});
  integer("scf", "quadrature_order", "quadrature order for the Hamiltonian and energy", [](R& c) -> int& { return c.scf.hamiltonian.quadrature_order; });
  real("eigen", "tol", "LOBPCG residual tolerance", [](R& c) -> double& { return c.scf.eigen.tol; });
  integer("eigen", "maxit", "LOBPCG iteration limit", [](R& c) -> int& { return c.scf.eigen.maxit; });
  integer("eigen", "precond_cg_iterations", "Jacobi-CG steps per preconditioner application", [](R& c) -> int& { return c.scf.eigen.precond_cg_iterations; });
  integer("eigen", "guard", "extra random columns in the block", [](R& c) -> std::size_t& { return c.scf.eigen.guard; });
  integer("eigen", "seed", "random seed", [](R& c) -> std::uint64_t& { return c.scf.eigen.seed; });
  boolean("eigen", "random_guess", "start from random vectors instead of atomic functions", [](R& c) -> bool& { return c.scf.random_guess; });
  real("poisson", "cg_tol", "relative CG tolerance of the Hartree solve", [](R& c) -> double& { return c.scf.poisson.cg_tol; });
  integer("poisson", "cg_maxit", "CG iteration limit of the Hartree solve", [](R& c) -> int& { return c.scf.poisson.cg_maxit; });
  k.push_back({"adapt", "mode", "maximum or absolute", [](const R& c) { return std::string(c.scf.marking.mode == adapt::MarkMode::Maximum ? "maximum" : "absolute"); },
               [](R& c, const std::string& key, const std::string& v) {
                 if (v == "maximum") c.scf.marking.mode = adapt::MarkMode::Maximum;
                 else if (v == "absolute") c.scf.marking.mode = adapt::MarkMode::Absolute;
                 else throw ConfigError(key + ": expected maximum or absolute, got '" + v + "'");
               }});
  real("adapt", "refine_fraction", "maximum mode: refine where eta >= fraction * max", [](R& c) -> double& { return c.scf.marking.refine_fraction; });
  real("adapt", "coarsen_fraction", "coarsen where eta <= fraction * max (or * tol_ada)", [](R& c) -> double& { return c.scf.marking.coarsen_fraction; });
  real("adapt", "tol_ada", "absolute mode: refine where eta > tol_ada", [](R& c) -> double& { return c.scf.marking.tol_ada; });
  integer("adapt", "max_leaves", "leaf budget per mesh (0: none)", [](R& c) -> std::size_t& { return c.scf.marking.max_leaves; });
  k.push_back({"adapt", "normalization", "per-orbital indicator normalization: max, l2, sum or none",
               [](const R& c) { return std::string(adapt::to_string(c.scf.indicator.normalization)); },
               [](R& c, const std::string&, const std::string& v) { c.scf.indicator.normalization = adapt::parse_normalization(v); }});
  integer("adapt", "quadrature_order", "quadrature order of the indicator residual", [](R& c) -> int& { return c.scf.indicator.quadrature_order; });
  boolean("adapt", "hartree_mesh", "adapt the Hartree mesh", [](R& c) -> bool& { return c.scf.adapt_hartree_mesh; });
  k.push_back({"output", "directory", "output directory", [](const R& c) { return c.output_directory; },
               [](R& c, const std::string&, const std::string& v) { c.output_directory = v; }});
  boolean("output", "vtk", "write final fields as legacy VTK", [](R& c) -> bool& { return c.write_vtk; });
  boolean("output", "checkpoint", "write a binary checkpoint of the final state", [](R& c) -> bool& { return c.write_checkpoint; });
  return k;
}

}  // namespace detail

/// MMKS_<SECTION>_<KEY>
inline std::string env_name(const std::string& section, const std::string& key) { return "MMKS_" + detail::upper(section) + "_" + detail::upper(key); }

inline void validate(const RunConfig& c) {
  auto bad = [](const std::string& m) { throw ConfigError(m); };
  if (!(c.box_half_width > 0.0)) bad("system.box_half_width: must be positive");
  if (c.cells < 1) bad("system.cells: must be at least 1");
  if (c.levels < 0 || c.nuclear_levels < 0) bad("system.levels: must be nonnegative");
  for (const auto& a : c.atoms)
    for (double x : a.position)
      if (!(std::abs(x) < c.box_half_width)) bad("system.atoms: atom outside the box");
  if (!(c.scf.alpha > 0.0 && c.scf.alpha < 1.0)) bad("scf.alpha: must lie in (0, 1)");
  if (!(c.scf.tol_density > 0.0)) bad("scf.tol_density: must be positive");
  if (!(c.scf.tol_energy > 0.0)) bad("scf.tol_energy: must be positive");
  if (!(c.scf.marking.tol_ada > 0.0)) bad("adapt.tol_ada: must be positive");
  if (!(c.scf.eigen.tol > 0.0)) bad("eigen.tol: must be positive");
  if (!(c.scf.poisson.cg_tol > 0.0)) bad("poisson.cg_tol: must be positive");
  if (!(c.theta > 0.0)) bad("split.theta: must be positive");
  if (c.scf.max_rounds < 1 || c.scf.max_scf_iterations < 1) bad("scf.max_rounds and scf.max_iterations must be at least 1");
  if (!(c.scf.marking.refine_fraction >= 0.0 && c.scf.marking.refine_fraction < 1.0)) bad("adapt.refine_fraction: must lie in [0, 1)");
  if (!(c.scf.marking.coarsen_fraction >= 0.0 && c.scf.marking.coarsen_fraction < 1.0)) bad("adapt.coarsen_fraction: must lie in [0, 1)");
  for (const auto& a : c.atoms) split::core_orbitals(a.charge);
}

/// Reads INI text. Unknown sections or keys are errors. Environment
/// variables MMKS_<SECTION>_<KEY> override the file.
inline RunConfig parse_config(std::istream& in, const std::string& origin = "<config>", bool use_env = true) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig c;
  const auto keys = detail::schema();
  std::map<std::string, const detail::Key*> by_name;
  for (const auto& k : keys) by_name[k.section + "." + k.name] = &k;
  for (const auto& [sec, body] : pt) {
    if (body.empty() && !body.data().empty()) throw ConfigError(origin + ": key '" + sec + "' outside a section");
    for (const auto& [name, val] : body) {
      const std::string full = sec + "." + name;
      const auto it = by_name.find(full);
      if (it == by_name.end()) throw ConfigError(origin + ": unknown key '" + full + "'");
      it->second->set(c, origin + ": " + full, val.data());
    }
  }
  if (use_env)
    for (const auto& k : keys)
      if (const char* v = std::getenv(env_name(k.section, k.name).c_str())) k.set(c, env_name(k.section, k.name), v);
  validate(c);
  return c;
}

inline RunConfig parse_config(const std::string& text, bool use_env = true) {
  std::istringstream is(text);
  return parse_config(is, "<config>", use_env);
}

/// Every key with its current value and a comment line.
inline void write_config(std::ostream& os, const RunConfig& c) {
  std::string section;
  for (const auto& k : detail::schema()) {
    if (k.section != section) {
      if (!section.empty()) os << '\n';
      section = k.section;
      os << '[' << section << "]\n";
    }
    os << "; " << k.help << '\n' << k.name << " = " << k.get(c) << '\n';
  }
}

// CSV logs.

inline void write_iteration_header(std::ostream& os, std::size_t n_meshes) {
  os << "round,iteration,stage,delta_rho,e_tot";
  for (std::size_t m = 0; m + 1 < n_meshes; ++m) os << ",dofs_" << m + 1;
  os << ",dofs_h\n";
}

/// One row per stage (group solve plus density update).
inline void write_iteration_rows(std::ostream& os, const scf::IterationRecord& r) {
  for (std::size_t g = 0; g < r.stage_delta.size(); ++g) {
    os << r.round << ',' << r.iteration << ',' << g + 1 << ',' << detail::fmt(r.stage_delta[g]) << ',' << detail::fmt(r.energy);
    for (auto d : r.dofs) os << ',' << d;
    os << '\n';
  }
}

inline void write_energy_header(std::ostream& os, std::size_t n_eigenvalues) {
  os << "step,e_tot";
  for (std::size_t i = 0; i < n_eigenvalues; ++i) os << ",eps_" << i + 1;
  os << ",delta_rho\n";
}

inline void write_energy_row(std::ostream& os, int step, const scf::IterationRecord& r) {
  os << step << ',' << detail::fmt(r.energy);
  for (double e : r.eigenvalues) os << ',' << detail::fmt(e);
  os << ',' << detail::fmt(r.delta_rho) << '\n';
}

inline void write_rounds(std::ostream& os, const scf::Report& rep) {
  const std::size_t nm = rep.rounds.empty() ? 0 : rep.rounds.front().dofs.size();
  os << "round,scf_iterations,scf_converged,e_tot,delta_rho";
  for (std::size_t m = 0; m + 1 < nm; ++m) os << ",dofs_" << m + 1;
  os << ",dofs_h\n";
  for (const auto& r : rep.rounds) {
    os << r.round << ',' << r.scf_iterations << ',' << (r.scf_converged ? 1 : 0) << ',' << detail::fmt(r.energy) << ',' << detail::fmt(r.delta_rho);
    for (auto d : r.dofs) os << ',' << d;
    os << '\n';
  }
}

inline void write_summary(std::ostream& os, const scf::Report& rep) {
  os.precision(10);
  os << "converged: " << (rep.converged ? "yes" : "no") << '\n';
  os << "plan: " << split::to_string(rep.plan.strategy) << " (";
  for (std::size_t g = 0; g < rep.plan.group_sizes.size(); ++g) os << (g ? "," : "") << rep.plan.group_sizes[g];
  os << ")\n";
  os << "rounds: " << rep.rounds.size() << '\n';
  os << "e_tot: " << rep.energy << '\n';
  os << "eigenvalues:";
  for (double e : rep.eigenvalues) os << ' ' << e;
  os << "\nmerged_eigenvalues:";
  for (double e : rep.merged_eigenvalues) os << ' ' << e;
  os << '\n';
  if (rep.gap) os << "gap: " << *rep.gap << '\n';
  if (rep.merged_gap) os << "merged_gap: " << *rep.merged_gap << '\n';
  os << "splitting_factor: " << rep.splitting_factor << '\n';
  os << "merged_dofs: " << rep.merged_dofs << '\n';
  os << "orthogonality_error: " << rep.orthogonality_error << '\n';
  if (!rep.rounds.empty()) {
    os << "dofs:";
    for (auto d : rep.rounds.back().dofs) os << ' ' << d;
    os << '\n';
  }
}

// Checkpoint container: "MMKSCKPT", version, box, the tree as the ordered
// list of split nodes, then per mesh its leaves and fields.

inline constexpr char kMagic[8] = {'M', 'M', 'K', 'S', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ConfigError("checkpoint: truncated file");
  return v;
}

inline void put_vec(std::ostream& os, const std::vector<double>& v) {
  put<std::uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline std::vector<double> take_vec(std::istream& is) {
  const auto n = take<std::uint64_t>(is);
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw ConfigError("checkpoint: truncated file");
  return v;
}

inline void put_mesh(std::ostream& os, const TetMesh& m) {
  put<std::uint64_t>(os, m.generation());
  put<std::uint64_t>(os, m.leaves().size());
  for (auto l : m.leaves()) put<std::uint32_t>(os, l);
}

inline TetMesh take_mesh(std::istream& is, const std::shared_ptr<hgt::TetTree>& tree) {
  const auto gen = take<std::uint64_t>(is);
  const auto n = take<std::uint64_t>(is);
  std::vector<std::uint8_t> in(tree->size(), 0);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto id = take<std::uint32_t>(is);
    if (id >= tree->size()) throw ConfigError("checkpoint: leaf id out of range");
    in[id] = 1;
  }
  return TetMesh::from_membership(tree, std::move(in), gen);
}

inline Field take_field(std::istream& is, const SpacePtr& s) {
  auto c = take_vec(is);
  if (c.size() != s->n_dofs()) throw ConfigError("checkpoint: field length does not match its mesh");
  return Field(s, std::move(c));
}

}  // namespace detail

/// Writes the SCF state. All meshes must share one box tree.
inline void save_checkpoint(std::ostream& os, const scf::ScfState& s) {
  const auto& tree = s.space_h->mesh().tree();
  for (const auto& g : s.groups) MMKS_REQUIRE(&g.space->mesh().tree() == &tree, "save_checkpoint: meshes do not share a tree");
  os.write(kMagic, 8);
  detail::put(os, kCheckpointVersion);
  detail::put(os, tree.box_half_width());
  detail::put<std::int32_t>(os, tree.box_cells());
  // Split nodes in child-creation order replay the tree exactly.
  std::vector<std::pair<NodeId, NodeId>> splits;
  for (NodeId id = 0; id < tree.size(); ++id)
    if (tree.has_children(id)) splits.emplace_back(tree.node(id).first_child, id);
  std::sort(splits.begin(), splits.end());
  detail::put<std::uint64_t>(os, splits.size());
  for (const auto& [first, id] : splits) detail::put<std::uint32_t>(os, id);
  detail::put(os, s.alpha);
  detail::put<std::int32_t>(os, s.iteration);
  detail::put<std::int64_t>(os, s.density_updates);
  detail::put_vec(os, s.delta_rho_history);
  detail::put_vec(os, s.energy_history);
  detail::put<std::uint64_t>(os, s.groups.size());
  for (std::size_t g = 0; g < s.groups.size(); ++g) {
    const auto& grp = s.groups[g];
    detail::put_mesh(os, grp.space->mesh());
    detail::put<std::int32_t>(os, grp.index);
    detail::put<std::uint64_t>(os, grp.orbitals.size());
    detail::put_vec(os, grp.eigenvalues);
    detail::put_vec(os, grp.occupations);
    for (const auto& o : grp.orbitals) detail::put_vec(os, o.coeffs);
    detail::put_vec(os, s.rho[g].coeffs);
  }
  detail::put_mesh(os, s.space_h->mesh());
  detail::put_vec(os, s.rho_h.coeffs);
  detail::put_vec(os, s.phi.coeffs);
  if (!os) throw SolverError("save_checkpoint: write failed");
}

inline scf::ScfState load_checkpoint(std::istream& is) {
  char magic[8] = {};
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw ConfigError("checkpoint: bad magic");
  const auto version = detail::take<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
  const auto l = detail::take<double>(is);
  const auto n = detail::take<std::int32_t>(is);
  if (!(l > 0.0) || n < 1) throw ConfigError("checkpoint: bad box");
  auto tree = hgt::make_box_tree(l, n);
  const auto n_splits = detail::take<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n_splits; ++i) {
    const auto id = detail::take<std::uint32_t>(is);
    if (id >= tree->size()) throw ConfigError("checkpoint: split node out of range");
    tree->ensure_children(id);
  }
  scf::ScfState s;
  s.alpha = detail::take<double>(is);
  s.iteration = detail::take<std::int32_t>(is);
  s.density_updates = detail::take<std::int64_t>(is);
  s.delta_rho_history = detail::take_vec(is);
  s.energy_history = detail::take_vec(is);
  const auto ng = detail::take<std::uint64_t>(is);
  for (std::uint64_t g = 0; g < ng; ++g) {
    ks::EigenGroup grp;
    grp.space = build_space(detail::take_mesh(is, tree));
    grp.index = detail::take<std::int32_t>(is);
    const auto no = detail::take<std::uint64_t>(is);
    grp.eigenvalues = detail::take_vec(is);
    grp.occupations = detail::take_vec(is);
    for (std::uint64_t k = 0; k < no; ++k) grp.orbitals.push_back(detail::take_field(is, grp.space));
    s.rho.push_back(detail::take_field(is, grp.space));
    s.groups.push_back(std::move(grp));
  }
  s.space_h = build_space(detail::take_mesh(is, tree));
  s.rho_h = detail::take_field(is, s.space_h);
  s.phi = detail::take_field(is, s.space_h);
  s.phi_current = true;
  return s;
}

}  // namespace mmks::io
