// mmks command line: run, table1, oracle, defaults.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include "mmks/io.hpp"
#include "mmks/lobpcg.hpp"
#include "mmks/radial.hpp"

using namespace mmks;
namespace fs = std::filesystem;

namespace {

enum class Level { Error, Warn, Info, Debug };
Level g_level = Level::Info;

template <class... A>
void log(Level l, const char* f, A... args) {
  if (l > g_level) return;
  static const char* tag[] = {"error", "warn", "info", "debug"};
  std::fprintf(stderr, "[%s] ", tag[static_cast<int>(l)]);
  std::fprintf(stderr, f, args...);
  std::fputc('\n', stderr);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw ConfigError("cannot write " + p.string());
  os.precision(17);
  return os;
}

void write_fields(const fs::path& dir, const scf::ScfState& s) {
  for (std::size_t g = 0; g < s.groups.size(); ++g) {
    std::vector<std::pair<std::string, const Field*>> f{{"rho", &s.rho[g]}};
    for (std::size_t j = 0; j < s.groups[g].orbitals.size(); ++j) f.emplace_back("psi_" + std::to_string(j + 1), &s.groups[g].orbitals[j]);
    auto os = open_out(dir / ("group_" + std::to_string(g + 1) + ".vtk"));
    write_vtk(os, *s.groups[g].space, std::span<const std::pair<std::string, const Field*>>(f));
  }
  std::vector<std::pair<std::string, const Field*>> f{{"rho", &s.rho_h}, {"phi", &s.phi}};
  auto os = open_out(dir / "hartree.vtk");
  write_vtk(os, *s.space_h, std::span<const std::pair<std::string, const Field*>>(f));
}

int run(const io::RunConfig& c) {
  const fs::path dir(c.output_directory);
  fs::create_directories(dir);
  const auto mesh = scf::initial_mesh(c.box_half_width, c.cells, c.levels, c.atoms, c.nuclear_levels, c.nuclear_radius);

  split::SplitPlan plan;
  if (c.strategy == split::Strategy::EigenvalueGap) {
    const auto hints = scf::eigenvalue_hints(c.atoms, mesh, c.scf);
    plan = split::make_plan(c.atoms, c.strategy, std::span<const double>(hints), c.theta);
  } else {
    plan = split::make_plan(c.atoms, c.strategy);
  }
  std::string groups;
  for (auto n : plan.group_sizes) groups += (groups.empty() ? "" : ",") + std::to_string(n);
  log(Level::Info, "%s: %zu atoms, plan %s (%s), initial mesh %zu leaves", io::format_atoms(c.atoms).c_str(), c.atoms.size(),
      split::to_string(plan.strategy), groups.c_str(), mesh.leaves().size());

  auto iters = open_out(dir / "iterations.csv");
  auto energies = open_out(dir / "energies.csv");
  io::write_iteration_header(iters, plan.n_groups() + 1);
  io::write_energy_header(energies, static_cast<std::size_t>(plan.total()));
  int step = 0;
  const auto rep = scf::outer_loop(c.atoms, plan, mesh, c.scf, [&](const scf::IterationRecord& r) {
    io::write_iteration_rows(iters, r);
    io::write_energy_row(energies, step++, r);
    iters.flush();
    energies.flush();
    log(Level::Debug, "round %d iteration %d: E %.10f, drho %.3e", r.round, r.iteration, r.energy, r.delta_rho);
  });
  for (const auto& r : rep.rounds)
    log(Level::Info, "round %d: %d SCF iterations, E %.10f, eps_1 %.8f", r.round, r.scf_iterations, r.energy, r.eigenvalues.front());

  auto rounds = open_out(dir / "rounds.csv");
  io::write_rounds(rounds, rep);
  auto summary = open_out(dir / "summary.txt");
  io::write_summary(summary, rep);
  if (c.write_vtk) write_fields(dir, rep.state);
  if (c.write_checkpoint) {
    std::ofstream ck(dir / "checkpoint.bin", std::ios::binary);
    if (!ck) throw ConfigError("cannot write checkpoint");
    io::save_checkpoint(ck, rep.state);
  }
  io::write_summary(std::cout, rep);
  if (!rep.converged) log(Level::Warn, "energy tolerance not met after %zu rounds", rep.rounds.size());
  return rep.converged ? 0 : 2;
}

void table1(double r_max, std::size_t n, std::size_t n_adapted) {
  using radial::Orbital;
  const std::vector<Orbital> all{Orbital::S1, Orbital::S2, Orbital::P2};
  std::cout << "mesh,points";
  for (auto o : all) std::cout << ',' << radial::label(o);
  std::cout << '\n';
  auto row = [&](const std::string& name, std::size_t pts, auto errors) {
    std::cout << name << ',' << pts;
    for (auto o : all) {
      const double e = errors(o);
      std::cout << ',';
      if (!std::isnan(e)) std::cout << e;
    }
    std::cout << '\n';
  };
  const auto u = radial::uniform_mesh(r_max, n);
  row("uniform", n, [&](Orbital o) { return radial::interp_l2_error(o, u); });
  const auto shared = radial::equidistribute(std::span<const Orbital>(all), n_adapted, r_max);
  row("shared", n_adapted, [&](Orbital o) { return radial::interp_l2_error(o, shared.points); });
  for (auto o : all) {
    const auto own = radial::equidistribute(std::span<const Orbital>(&o, 1), n_adapted, r_max);
    row(std::string("own_") + radial::label(o), n_adapted, [&](Orbital p) { return p == o ? radial::interp_l2_error(p, own.points) : std::nan(""); });
  }
}

dense::Matrix to_dense(const sparse::CsrMatrix& a) {
  dense::Matrix d(a.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (auto k = a.row_offsets()[i]; k < a.row_offsets()[i + 1]; ++k)
      d(i, static_cast<std::size_t>(a.col_indices()[static_cast<std::size_t>(k)])) = a.values()[static_cast<std::size_t>(k)];
  return d;
}

sparse::CsrMatrix random_pencil_matrix(std::size_t n, std::mt19937_64& rng, double shift) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<sparse::CsrMatrix::Triplet> t;
  std::vector<double> rowsum(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < std::min(n, i + 6); ++j) {
      const double v = u(rng);
      t.push_back({static_cast<int>(i), static_cast<int>(j), v});
      t.push_back({static_cast<int>(j), static_cast<int>(i), v});
      rowsum[i] += std::abs(v);
      rowsum[j] += std::abs(v);
    }
  for (std::size_t i = 0; i < n; ++i) t.push_back({static_cast<int>(i), static_cast<int>(i), rowsum[i] + shift + (u(rng) + 1.0)});
  return sparse::CsrMatrix::from_triplets(n, std::move(t));
}

/// LOBPCG against the dense generalized eigensolver on random SPD pencils.
int oracle(int trials, std::size_t n_max, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::cout << "trial,n,max_eigenvalue_error,b_orthonormality,iterations,converged\n";
  bool ok = true;
  for (int t = 0; t < trials; ++t) {
    const std::size_t n = std::max<std::size_t>(4 * k, n_max - static_cast<std::size_t>(t) * n_max / (2 * static_cast<std::size_t>(trials)));
    const auto a = random_pencil_matrix(n, rng, 0.1);
    const auto b = random_pencil_matrix(n, rng, 1.0);
    const auto ref = dense::generalized_eigen(to_dense(a), to_dense(b));
    lobpcg::EigenRequest req;
    req.a = &a;
    req.b = &b;
    req.x0 = dense::Matrix(n, k);
    for (auto& v : req.x0.data()) v = g(rng);
    req.tol = 1e-10;
    req.maxit = 3000;
    const auto r = lobpcg::solve(req);
    double err = 0.0;
    bool conv = true;
    for (std::size_t j = 0; j < k; ++j) {
      err = std::max(err, std::abs(r.eigenvalues[j] - ref.values[j]));
      conv = conv && r.converged[j];
    }
    dense::Matrix bx(n, k);
    for (std::size_t j = 0; j < k; ++j) b.multiply(r.eigenvectors.col(j), bx.col(j));
    const double orth = dense::max_abs_diff_identity(dense::multiply_tn(r.eigenvectors, bx));
    std::cout << t << ',' << n << ',' << err << ',' << orth << ',' << r.iterations << ',' << (conv ? 1 : 0) << '\n';
    ok = ok && conv && err <= 1e-8 && orth <= 1e-10;
  }
  return ok ? 0 : 2;
}

/// Levels of the spherical LDA atom on a radial grid.
void atom_levels(double z, int electrons, bool bare) {
  radial::AtomOptions opt;
  opt.interacting = !bare;
  const auto r = radial::radial_lda_solve(z, electrons, opt);
  static const char spdf[] = "spdf";
  std::cout << "shell,occupation,eigenvalue\n";
  std::cout.precision(10);
  for (std::size_t i = 0; i < r.shells.size(); ++i)
    std::cout << r.shells[i].n << spdf[r.shells[i].l] << ',' << r.shells[i].occupation << ',' << r.eigenvalues[i] << '\n';
  std::cout << "e_tot," << r.total_energy << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-mesh adaptive finite element Kohn-Sham solver"};
  app.require_subcommand(1);
  std::string level = "info";
  app.add_option("--log-level", level, "error, warn, info or debug")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}))
      ->capture_default_str();

  auto* run_cmd = app.add_subcommand("run", "Run the adaptive SCF");
  std::string config_path, out;
  long long seed = -1;
  run_cmd->add_option("-c,--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
  run_cmd->add_option("-o,--out", out, "Output directory (overrides the config)");
  run_cmd->add_option("--seed", seed, "Random seed for initial guesses (overrides the config)");

  auto* table_cmd = app.add_subcommand("table1", "Radial interpolation errors as CSV");
  double r_max = 30.0;
  std::size_t n = 100, n_adapted = 40;
  table_cmd->add_option("--r-max", r_max)->capture_default_str();
  table_cmd->add_option("--points", n, "Uniform mesh points")->capture_default_str();
  table_cmd->add_option("--adapted-points", n_adapted, "Equidistributed mesh points")->capture_default_str();

  auto* oracle_cmd = app.add_subcommand("oracle", "LOBPCG against a dense eigensolver; --atom prints radial LDA levels");
  int trials = 20;
  std::size_t n_max = 200, k = 5;
  double z = 0.0;
  int electrons = -1;
  bool bare = false;
  oracle_cmd->add_option("--trials", trials, "Random pencils")->capture_default_str();
  oracle_cmd->add_option("--size", n_max, "Largest pencil size")->capture_default_str();
  oracle_cmd->add_option("--eigenpairs", k)->capture_default_str();
  oracle_cmd->add_option("--seed", seed, "Random seed");
  oracle_cmd->add_option("--atom", z, "Nuclear charge of a spherical atom instead");
  oracle_cmd->add_option("-n,--electrons", electrons, "Electron count for --atom (default: neutral)");
  oracle_cmd->add_flag("--bare", bare, "No electron interaction for --atom");

  auto* defaults_cmd = app.add_subcommand("defaults", "Print the default configuration");

  CLI11_PARSE(app, argc, argv);
  g_level = level == "error" ? Level::Error : level == "warn" ? Level::Warn : level == "debug" ? Level::Debug : Level::Info;

  try {
    if (*run_cmd) {
      io::RunConfig c;
      if (!config_path.empty()) {
        std::ifstream in(config_path);
        c = io::parse_config(in, config_path);
      } else {
        c = io::parse_config(std::string(), true);
      }
      if (!out.empty()) c.output_directory = out;
      if (seed >= 0) c.scf.eigen.seed = static_cast<decltype(c.scf.eigen.seed)>(seed);
      return run(c);
    }
    if (*table_cmd) table1(r_max, n, n_adapted);
    if (*oracle_cmd) {
      if (z > 0.0) {
        atom_levels(z, electrons < 0 ? static_cast<int>(z) : electrons, bare);
        return 0;
      }
      return oracle(trials, n_max, k, seed >= 0 ? static_cast<std::uint64_t>(seed) : 12345u);
    }
    if (*defaults_cmd) io::write_config(std::cout, io::RunConfig{});
    return 0;
  } catch (const std::exception& e) {
    log(Level::Error, "%s", e.what());
    return 1;
  }
}
