#pragma once

// Compressed-row sparse matrices, pattern-based assembly, and a
// preconditioned conjugate-gradient solver.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mmks/error.hpp"

namespace mmks::sparse {

using Vector = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

class CsrMatrix {
 public:
  CsrMatrix() = default;

  /// Builds an all-zero matrix on a pattern given as sorted, unique column lists per row.
  static CsrMatrix from_pattern(const std::vector<std::vector<std::int32_t>>& rows, bool symmetric = true) {
    CsrMatrix m;
    m.n_ = rows.size();
    m.symmetric_ = symmetric;
    m.row_offsets_.assign(m.n_ + 1, 0);
    for (std::size_t i = 0; i < m.n_; ++i) m.row_offsets_[i + 1] = m.row_offsets_[i] + static_cast<std::int64_t>(rows[i].size());
    m.col_indices_.reserve(static_cast<std::size_t>(m.row_offsets_.back()));
    for (const auto& r : rows) m.col_indices_.insert(m.col_indices_.end(), r.begin(), r.end());
    m.values_.assign(m.col_indices_.size(), 0.0);
    return m;
  }

  struct Triplet {
    std::int32_t row;
    std::int32_t col;
    double value;
  };

  /// Sums duplicate entries.
  static CsrMatrix from_triplets(std::size_t n, std::vector<Triplet> t, bool symmetric = true) {
    std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    CsrMatrix m;
    m.n_ = n;
    m.symmetric_ = symmetric;
    m.row_offsets_.assign(n + 1, 0);
    for (std::size_t k = 0; k < t.size(); ++k) {
      MMKS_REQUIRE(t[k].row >= 0 && static_cast<std::size_t>(t[k].row) < n && t[k].col >= 0 &&
                       static_cast<std::size_t>(t[k].col) < n,
                   "from_triplets: index out of range");
      if (k > 0 && t[k].row == t[k - 1].row && t[k].col == t[k - 1].col) {
        m.values_.back() += t[k].value;
        continue;
      }
      m.col_indices_.push_back(t[k].col);
      m.values_.push_back(t[k].value);
      ++m.row_offsets_[static_cast<std::size_t>(t[k].row) + 1];
    }
    for (std::size_t i = 0; i < n; ++i) m.row_offsets_[i + 1] += m.row_offsets_[i];
    return m;
  }

  static CsrMatrix identity(std::size_t n) {
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < n; ++i) t.push_back({static_cast<std::int32_t>(i), static_cast<std::int32_t>(i), 1.0});
    return from_triplets(n, std::move(t));
  }

  std::size_t size() const { return n_; }
  std::size_t nnz() const { return values_.size(); }
  bool symmetric() const { return symmetric_; }

  const std::vector<std::int64_t>& row_offsets() const { return row_offsets_; }
  const std::vector<std::int32_t>& col_indices() const { return col_indices_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  /// Position of (i, j) in the value array, or -1 when not in the pattern.
  std::int64_t find(std::size_t i, std::size_t j) const {
    const auto b = col_indices_.begin() + row_offsets_[i];
    const auto e = col_indices_.begin() + row_offsets_[i + 1];
    auto it = std::lower_bound(b, e, static_cast<std::int32_t>(j));
    if (it == e || *it != static_cast<std::int32_t>(j)) return -1;
    return it - col_indices_.begin();
  }

  double operator()(std::size_t i, std::size_t j) const {
    const auto p = find(i, j);
    return p < 0 ? 0.0 : values_[static_cast<std::size_t>(p)];
  }

  void add(std::size_t i, std::size_t j, double v) {
    const auto p = find(i, j);
    MMKS_REQUIRE(p >= 0, "CsrMatrix::add: entry outside the sparsity pattern");
    values_[static_cast<std::size_t>(p)] += v;
  }

  void multiply(std::span<const double> x, std::span<double> y) const {
    MMKS_REQUIRE(x.size() == n_ && y.size() == n_, "CsrMatrix::multiply: size mismatch");
    for (std::size_t i = 0; i < n_; ++i) {
      double s = 0.0;
      for (auto k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k)
        s += values_[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(col_indices_[static_cast<std::size_t>(k)])];
      y[i] = s;
    }
  }

  Vector operator*(std::span<const double> x) const {
    Vector y(n_);
    multiply(x, y);
    return y;
  }

  Vector diagonal() const {
    Vector d(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) d[i] = (*this)(i, i);
    return d;
  }

  /// Linear combination a*this + b*other; both must share one pattern.
  CsrMatrix combine(double a, const CsrMatrix& other, double b) const {
    MMKS_REQUIRE(other.col_indices_ == col_indices_ && other.row_offsets_ == row_offsets_,
                 "CsrMatrix::combine: patterns differ");
    CsrMatrix out = *this;
    for (std::size_t k = 0; k < values_.size(); ++k) out.values_[k] = a * values_[k] + b * other.values_[k];
    return out;
  }

  /// Largest |a_ij - a_ji| over stored entries.
  double asymmetry() const {
    double m = 0.0;
    for (std::size_t i = 0; i < n_; ++i)
      for (auto k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
        const auto j = static_cast<std::size_t>(col_indices_[static_cast<std::size_t>(k)]);
        m = std::max(m, std::abs(values_[static_cast<std::size_t>(k)] - (*this)(j, i)));
      }
    return m;
  }

  /// Sub-matrix on the rows/columns flagged in keep, renumbered in order.
  CsrMatrix restrict_to(const std::vector<std::int32_t>& new_index) const {
    std::size_t m = 0;
    for (auto v : new_index)
      if (v >= 0) ++m;
    CsrMatrix out;
    out.n_ = m;
    out.symmetric_ = symmetric_;
    out.row_offsets_.assign(m + 1, 0);
    for (std::size_t i = 0; i < n_; ++i) {
      if (new_index[i] < 0) continue;
      const auto r = static_cast<std::size_t>(new_index[i]);
      for (auto k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
        const auto j = new_index[static_cast<std::size_t>(col_indices_[static_cast<std::size_t>(k)])];
        if (j < 0) continue;
        out.col_indices_.push_back(j);
        out.values_.push_back(values_[static_cast<std::size_t>(k)]);
        ++out.row_offsets_[r + 1];
      }
    }
    for (std::size_t i = 0; i < m; ++i) out.row_offsets_[i + 1] += out.row_offsets_[i];
    return out;
  }

  /// Matrix-market coordinate text (1-based indices, general storage).
  void write_matrix_market(std::ostream& os) const {
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << n_ << ' ' << n_ << ' ' << nnz() << '\n';
    os.precision(17);
    for (std::size_t i = 0; i < n_; ++i)
      for (auto k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k)
        os << i + 1 << ' ' << col_indices_[static_cast<std::size_t>(k)] + 1 << ' '
           << values_[static_cast<std::size_t>(k)] << '\n';
  }

 private:
  std::size_t n_ = 0;
  bool symmetric_ = true;
  std::vector<std::int64_t> row_offsets_{0};
  std::vector<std::int32_t> col_indices_;
  std::vector<double> values_;
};

/// Preconditioner: z = M⁻¹ r.
using Preconditioner = std::function<void(std::span<const double> r, std::span<double> z)>;

inline Preconditioner identity_preconditioner() {
  return [](std::span<const double> r, std::span<double> z) { std::copy(r.begin(), r.end(), z.begin()); };
}

inline Preconditioner jacobi_preconditioner(const CsrMatrix& a) {
  Vector inv = a.diagonal();
  for (auto& d : inv) d = d != 0.0 ? 1.0 / d : 1.0;
  return [inv = std::move(inv)](std::span<const double> r, std::span<double> z) {
    for (std::size_t i = 0; i < r.size(); ++i) z[i] = inv[i] * r[i];
  };
}

struct CgResult {
  Vector x;
  bool converged = false;
  int iterations = 0;
  double relative_residual = 0.0;
  std::vector<double> residual_history;  // ‖r_k‖₂
};

/// Preconditioned conjugate gradients for symmetric positive definite A.
inline CgResult cg_solve(const CsrMatrix& a, std::span<const double> b, std::span<const double> x0, double tol,
                         int maxit, const Preconditioner& precond) {
  const std::size_t n = a.size();
  MMKS_REQUIRE(b.size() == n && x0.size() == n, "cg_solve: size mismatch");
  CgResult res;
  res.x.assign(x0.begin(), x0.end());
  const double bnorm = norm2(b);
  Vector r(n), z(n), p(n), ap(n);
  a.multiply(res.x, ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  double rnorm = norm2(r);
  res.residual_history.push_back(rnorm);
  const double target = tol * (bnorm > 0.0 ? bnorm : 1.0);
  if (bnorm == 0.0 && rnorm == 0.0) {
    res.converged = true;
    return res;
  }
  res.relative_residual = rnorm / (bnorm > 0.0 ? bnorm : 1.0);
  if (rnorm <= target && maxit > 0) {
    res.converged = true;
    return res;
  }
  if (maxit <= 0) return res;
  precond(r, z);
  p = z;
  double rz = dot(r, z);
  for (int it = 1; it <= maxit; ++it) {
    a.multiply(p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) throw IndefiniteError("cg_solve: p·Ap <= 0, operator is not positive definite");
    const double alpha = rz / pap;
    axpy(alpha, p, res.x);
    axpy(-alpha, ap, r);
    rnorm = norm2(r);
    res.residual_history.push_back(rnorm);
    res.iterations = it;
    res.relative_residual = rnorm / (bnorm > 0.0 ? bnorm : 1.0);
    if (rnorm <= target) {
      res.converged = true;
      break;
    }
    precond(r, z);
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  return res;
}

/// Sorted unique column lists from a list of element connectivities.
template <typename ElementRange, typename DofsOf>
std::vector<std::vector<std::int32_t>> pattern_from_elements(std::size_t n, const ElementRange& elements, DofsOf dofs_of) {
  std::vector<std::vector<std::int32_t>> rows(n);
  for (const auto& e : elements) {
    const auto d = dofs_of(e);
    for (auto i : d)
      for (auto j : d) rows[static_cast<std::size_t>(i)].push_back(j);
  }
  for (auto& r : rows) {
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
  }
  return rows;
}

}  // namespace mmks::sparse
