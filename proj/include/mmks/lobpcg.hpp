#pragma once

// Block LOBPCG for A x = λ B x with in-order locking.
//
// The first n_prefix_locked columns of the initial block are treated as
// converged external eigenvectors: they are never modified and the iteration
// runs in their B-orthogonal complement. Columns that converge are locked in
// index order and also frozen, so the remaining columns keep converging to the
// next eigenpairs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "mmks/dense.hpp"
#include "mmks/error.hpp"
#include "mmks/sparse.hpp"

namespace mmks::lobpcg {

using sparse::CsrMatrix;
using Column = std::vector<double>;

/// w ≈ T_l⁻¹ r for column l with current Ritz value lambda.
using BlockPreconditioner = std::function<void(std::size_t column, double lambda, std::span<const double> r, std::span<double> w)>;

struct EigenRequest {
  const CsrMatrix* a = nullptr;
  const CsrMatrix* b = nullptr;
  dense::Matrix x0;  // n × k
  std::size_t n_prefix_locked = 0;
  double tol = 1e-7;
  int maxit = 500;
  BlockPreconditioner precond;  // identity when empty
  std::uint64_t seed = 12345;
  std::size_t n_wanted = 0;  // stop once this many leading columns are locked (0: all)
};

struct EigenResult {
  std::vector<double> eigenvalues;
  dense::Matrix eigenvectors;
  std::vector<bool> converged;
  int iterations = 0;
  int restarts = 0;
  std::vector<std::vector<double>> residual_history;  // per iteration, per column
  std::vector<std::vector<double>> ritz_history;      // per iteration, per column
  std::vector<int> lock_iteration;                    // -1 if never locked, 0 for prefix
};

/// Residual measure ‖Ax − λBx‖ / ((|λ| + 1) ‖Bx‖).
inline double relative_residual(std::span<const double> ax, std::span<const double> bx, double lambda) {
  double r2 = 0.0, b2 = 0.0;
  for (std::size_t i = 0; i < ax.size(); ++i) {
    const double r = ax[i] - lambda * bx[i];
    r2 += r * r;
    b2 += bx[i] * bx[i];
  }
  return std::sqrt(r2) / ((std::abs(lambda) + 1.0) * std::max(std::sqrt(b2), std::numeric_limits<double>::min()));
}

/// Preconditioner T_l = ½L − λ_l B for λ_l < 0 and ½L otherwise; T_l w = r is
/// solved approximately with a fixed number of Jacobi-CG iterations (none:
/// identity).
inline BlockPreconditioner build_preconditioner(const CsrMatrix& l_half, const CsrMatrix& b, int cg_iterations = 5) {
  return [&l_half, &b, cg_iterations](std::size_t, double lambda, std::span<const double> r, std::span<double> w) {
    if (cg_iterations <= 0) {
      std::copy(r.begin(), r.end(), w.begin());
      return;
    }
    const auto t = l_half.combine(1.0, b, lambda < 0.0 ? -lambda : 0.0);
    const std::vector<double> zero(r.size(), 0.0);
    const auto res = sparse::cg_solve(t, r, zero, 0.0, cg_iterations, sparse::jacobi_preconditioner(t));
    std::copy(res.x.begin(), res.x.end(), w.begin());
  };
}

struct RitzResult {
  dense::Matrix c;                    // m' × m'
  std::vector<double> values;         // ascending
  std::vector<std::size_t> kept;      // columns of S used (pivoted drop)
};

/// Dense Rayleigh–Ritz on span(S): (SᵀAS) C = (SᵀBS) C Λ. Numerically
/// dependent columns of S are dropped first.
inline RitzResult rayleigh_ritz(const dense::Matrix& s, const CsrMatrix& a, const CsrMatrix& b, double drop = 1e-12) {
  const std::size_t n = s.rows();
  const std::size_t m = s.cols();
  dense::Matrix as(n, m), bs(n, m);
  for (std::size_t j = 0; j < m; ++j) {
    a.multiply(s.col(j), as.col(j));
    b.multiply(s.col(j), bs.col(j));
  }
  auto ga = dense::multiply_tn(s, as);
  auto gb = dense::multiply_tn(s, bs);
  dense::symmetrize(ga);
  dense::symmetrize(gb);
  RitzResult out;
  out.kept = dense::independent_columns(gb, drop);
  dense::Matrix ra(out.kept.size(), out.kept.size()), rb(out.kept.size(), out.kept.size());
  for (std::size_t j = 0; j < out.kept.size(); ++j)
    for (std::size_t i = 0; i < out.kept.size(); ++i) {
      ra(i, j) = ga(out.kept[i], out.kept[j]);
      rb(i, j) = gb(out.kept[i], out.kept[j]);
    }
  auto eig = dense::generalized_eigen(ra, rb);
  out.c = std::move(eig.vectors);
  out.values = std::move(eig.values);
  return out;
}

namespace detail {

struct Basis {
  std::vector<Column> v;
  std::vector<Column> bv;
};

inline double dot(const Column& a, const Column& b) { return sparse::dot(a, b); }

/// B-orthogonalizes x against `against` and `basis` (two passes), then
/// appends it normalized; returns false when it is numerically dependent.
inline bool append_b_orthonormal(Column x, const Basis& against, Basis& basis, const CsrMatrix& b, double drop) {
  Column bx(x.size());
  b.multiply(x, bx);
  const double q0 = dot(x, bx);
  if (!(q0 > 0.0)) {
    if (dot(x, x) == 0.0) return false;
    throw IndefiniteError("lobpcg: B is not positive definite on the trial subspace");
  }
  const double n0 = std::sqrt(q0);
  for (int pass = 0; pass < 2; ++pass) {
    for (const Basis* set : std::array<const Basis*, 2>{&against, &basis})
      for (std::size_t k = 0; k < set->v.size(); ++k) {
        const double c = dot(set->bv[k], x);
        sparse::axpy(-c, set->v[k], x);
      }
  }
  b.multiply(x, bx);
  const double q1 = dot(x, bx);
  if (q1 < -(drop * n0) * (drop * n0)) throw IndefiniteError("lobpcg: B is not positive definite on the trial subspace");
  const double n1 = std::sqrt(std::max(q1, 0.0));
  if (!(n1 > drop * n0)) return false;
  for (auto& e : x) e /= n1;
  for (auto& e : bx) e /= n1;
  basis.v.push_back(std::move(x));
  basis.bv.push_back(std::move(bx));
  return true;
}

inline Column random_column(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Column c(n);
  for (auto& x : c) x = g(rng);
  return c;
}

/// r ← r − B Q Qᵀ r for the B-orthonormal locked set Q: the residual of the
/// pencil restricted to the complement.
inline void project_out(Column& r, const Basis& lock) {
  for (std::size_t q = 0; q < lock.v.size(); ++q) sparse::axpy(-dot(lock.v[q], r), lock.bv[q], r);
}

}  // namespace detail

/// relative_residual of the complement-projected residual.
inline double projected_residual(std::span<const double> ax, std::span<const double> bx, double lambda, const detail::Basis& lock) {
  if (lock.v.empty()) return relative_residual(ax, bx, lambda);
  Column r(ax.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = ax[i] - lambda * bx[i];
  detail::project_out(r, lock);
  return relative_residual(r, bx, 0.0) / (std::abs(lambda) + 1.0);
}

inline EigenResult solve(const EigenRequest& req) {
  MMKS_REQUIRE(req.a && req.b, "lobpcg: A and B are required");
  const auto& a = *req.a;
  const auto& b = *req.b;
  const std::size_t n = a.size();
  const std::size_t k = req.x0.cols();
  MMKS_REQUIRE(b.size() == n && req.x0.rows() == n, "lobpcg: size mismatch");
  MMKS_REQUIRE(k >= 1 && req.n_prefix_locked < k, "lobpcg: need 0 <= n_prefix_locked < k");
  MMKS_REQUIRE(k <= n, "lobpcg: block larger than the problem");
  constexpr double kDrop = 1e-12;
  std::mt19937_64 rng(req.seed);

  EigenResult res;
  res.eigenvalues.assign(k, 0.0);
  res.eigenvectors = dense::Matrix(n, k);
  res.converged.assign(k, false);
  res.lock_iteration.assign(k, -1);

  // Projection set for the complement: B-orthonormalized copy of every locked column.
  detail::Basis lock;
  Column ax(n), bx(n);
  for (std::size_t j = 0; j < req.n_prefix_locked; ++j) {
    Column x(req.x0.col(j).begin(), req.x0.col(j).end());
    std::copy(x.begin(), x.end(), res.eigenvectors.col(j).begin());
    a.multiply(x, ax);
    b.multiply(x, bx);
    res.eigenvalues[j] = detail::dot(x, ax) / detail::dot(x, bx);
    res.converged[j] = true;
    res.lock_iteration[j] = 0;
    detail::Basis tmp;
    if (detail::append_b_orthonormal(std::move(x), lock, tmp, b, kDrop)) {
      lock.v.push_back(std::move(tmp.v[0]));
      lock.bv.push_back(std::move(tmp.bv[0]));
    }
  }

  // Active block: columns [first_active, k).
  std::size_t first_active = req.n_prefix_locked;
  detail::Basis xa;
  for (std::size_t j = first_active; j < k; ++j) {
    Column x(req.x0.col(j).begin(), req.x0.col(j).end());
    int tries = 0;
    while (!detail::append_b_orthonormal(x, lock, xa, b, kDrop)) {
      x = detail::random_column(n, rng);
      MMKS_REQUIRE(++tries < 20, "lobpcg: cannot build an independent initial block");
      ++res.restarts;
    }
  }

  std::vector<Column> p;  // previous directions, one per active column (empty on first iteration)
  std::vector<double> lambda(res.eigenvalues);
  std::vector<double> last_resid(k, 0.0);
  std::vector<Column> ax_act, bx_act;

  for (int it = 1; it <= req.maxit; ++it) {
    const std::size_t ka = k - first_active;
    // Trial basis [X_a, W, P] in the complement of the locked columns.
    detail::Basis s;
    std::size_t x_kept = 0;
    for (std::size_t j = 0; j < ka; ++j) {
      if (detail::append_b_orthonormal(xa.v[j], lock, s, b, kDrop)) {
        ++x_kept;
      } else {
        int tries = 0;
        while (!detail::append_b_orthonormal(detail::random_column(n, rng), lock, s, b, kDrop))
          MMKS_REQUIRE(++tries < 20, "lobpcg: basis degeneracy could not be repaired");
        ++x_kept;
        ++res.restarts;
      }
    }
    if (it > 1) {
      for (std::size_t j = 0; j < ka; ++j) {
        Column r(n), w(n);
        for (std::size_t i = 0; i < n; ++i) r[i] = ax_act[j][i] - lambda[first_active + j] * bx_act[j][i];
        detail::project_out(r, lock);
        if (req.precond) {
          req.precond(first_active + j, lambda[first_active + j], r, w);
        } else {
          w = r;
        }
        detail::append_b_orthonormal(std::move(w), lock, s, b, kDrop);
      }
      for (auto& d : p) detail::append_b_orthonormal(d, lock, s, b, kDrop);
    }
    const std::size_t m = s.v.size();
    std::vector<Column> as(m, Column(n));
    for (std::size_t j = 0; j < m; ++j) a.multiply(s.v[j], as[j]);
    dense::Matrix ga(m, m), gb(m, m);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t i = 0; i <= j; ++i) {
        ga(i, j) = ga(j, i) = 0.5 * (detail::dot(s.v[i], as[j]) + detail::dot(s.v[j], as[i]));
        gb(i, j) = gb(j, i) = 0.5 * (detail::dot(s.v[i], s.bv[j]) + detail::dot(s.v[j], s.bv[i]));
      }
    const auto eig = dense::generalized_eigen(ga, gb);

    // New active block, images, and directions.
    std::vector<Column> xn(ka, Column(n, 0.0)), axn(ka, Column(n, 0.0)), bxn(ka, Column(n, 0.0)), pn(ka, Column(n, 0.0));
    for (std::size_t j = 0; j < ka; ++j) {
      for (std::size_t c = 0; c < m; ++c) {
        const double coef = eig.vectors(c, j);
        if (coef == 0.0) continue;
        sparse::axpy(coef, s.v[c], xn[j]);
        sparse::axpy(coef, as[c], axn[j]);
        sparse::axpy(coef, s.bv[c], bxn[j]);
        if (c >= x_kept) sparse::axpy(coef, s.v[c], pn[j]);
      }
      lambda[first_active + j] = eig.values[j];
    }

    std::vector<double> hist(k, 0.0);
    for (std::size_t j = 0; j < first_active; ++j) hist[j] = last_resid[j];
    for (std::size_t j = 0; j < ka; ++j) {
      last_resid[first_active + j] = projected_residual(axn[j], bxn[j], lambda[first_active + j], lock);
      hist[first_active + j] = last_resid[first_active + j];
    }
    res.residual_history.push_back(hist);
    res.ritz_history.push_back(lambda);
    res.iterations = it;

    // Lock converged columns in index order.
    std::size_t newly = 0;
    while (newly < ka && last_resid[first_active + newly] <= req.tol) ++newly;
    for (std::size_t j = 0; j < newly; ++j) {
      const std::size_t col = first_active + j;
      std::copy(xn[j].begin(), xn[j].end(), res.eigenvectors.col(col).begin());
      res.eigenvalues[col] = lambda[col];
      res.converged[col] = true;
      res.lock_iteration[col] = it;
      lock.v.push_back(xn[j]);
      lock.bv.push_back(bxn[j]);
    }
    first_active += newly;
    xa.v.assign(xn.begin() + static_cast<std::ptrdiff_t>(newly), xn.end());
    ax_act.assign(axn.begin() + static_cast<std::ptrdiff_t>(newly), axn.end());
    bx_act.assign(bxn.begin() + static_cast<std::ptrdiff_t>(newly), bxn.end());
    p.assign(pn.begin() + static_cast<std::ptrdiff_t>(newly), pn.end());
    if (first_active == k || (req.n_wanted > 0 && first_active >= req.n_wanted)) break;
  }
  for (std::size_t j = first_active; j < k; ++j) {
    std::copy(xa.v[j - first_active].begin(), xa.v[j - first_active].end(), res.eigenvectors.col(j).begin());
    res.eigenvalues[j] = lambda[j];
  }
  return res;
}

/// Residual history as CSV: iteration, then one column per eigenvector.
inline void write_residual_csv(std::ostream& os, const EigenResult& r) {
  os << "iteration";
  const std::size_t k = r.eigenvalues.size();
  for (std::size_t j = 0; j < k; ++j) os << ",col" << j;
  os << '\n';
  os.precision(10);
  for (std::size_t i = 0; i < r.residual_history.size(); ++i) {
    os << i + 1;
    for (double v : r.residual_history[i]) os << ',' << v;
    os << '\n';
  }
}

}  // namespace mmks::lobpcg
