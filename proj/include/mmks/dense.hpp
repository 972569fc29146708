#pragma once

// Small dense linear algebra used by the eigensolvers: a column-major matrix,
// Cholesky, and a symmetric eigensolver (Householder tridiagonalization
// followed by implicit QL with Wilkinson-type shifts).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "mmks/error.hpp"

namespace mmks::dense {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[j * rows_ + i]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[j * rows_ + i]; }

  std::span<double> col(std::size_t j) { return {data_.data() + j * rows_, rows_}; }
  std::span<const double> col(std::size_t j) const { return {data_.data() + j * rows_, rows_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t j = 0; j < cols_; ++j)
      for (std::size_t i = 0; i < rows_; ++i) t(j, i) = (*this)(i, j);
    return t;
  }

  /// Columns [first, first + count).
  Matrix columns(std::size_t first, std::size_t count) const {
    Matrix out(rows_, count);
    std::copy(data_.begin() + static_cast<std::ptrdiff_t>(first * rows_),
              data_.begin() + static_cast<std::ptrdiff_t>((first + count) * rows_), out.data_.begin());
    return out;
  }

  /// Keeps only the listed columns, in the listed order.
  Matrix select_columns(std::span<const std::size_t> idx) const {
    Matrix out(rows_, idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto src = col(idx[k]);
      std::copy(src.begin(), src.end(), out.col(k).begin());
    }
    return out;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Horizontal concatenation [a, b].
inline Matrix hcat(const Matrix& a, const Matrix& b) {
  if (a.cols() == 0) return b;
  if (b.cols() == 0) return a;
  MMKS_REQUIRE(a.rows() == b.rows(), "hcat: row mismatch");
  Matrix out(a.rows(), a.cols() + b.cols());
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(a.data().size()));
  return out;
}

inline Matrix multiply(const Matrix& a, const Matrix& b) {
  MMKS_REQUIRE(a.cols() == b.rows(), "multiply: dimension mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t j = 0; j < b.cols(); ++j)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double bkj = b(k, j);
      if (bkj == 0.0) continue;
      for (std::size_t i = 0; i < a.rows(); ++i) c(i, j) += a(i, k) * bkj;
    }
  return c;
}

/// aᵀ b.
inline Matrix multiply_tn(const Matrix& a, const Matrix& b) {
  MMKS_REQUIRE(a.rows() == b.rows(), "multiply_tn: dimension mismatch");
  Matrix c(a.cols(), b.cols());
  for (std::size_t j = 0; j < b.cols(); ++j) {
    auto bj = b.col(j);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      auto ai = a.col(i);
      double s = 0.0;
      for (std::size_t k = 0; k < a.rows(); ++k) s += ai[k] * bj[k];
      c(i, j) = s;
    }
  }
  return c;
}

inline void symmetrize(Matrix& a) {
  for (std::size_t j = 0; j < a.cols(); ++j)
    for (std::size_t i = j + 1; i < a.rows(); ++i) {
      const double v = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = v;
      a(j, i) = v;
    }
}

inline double max_abs_diff_identity(const Matrix& g) {
  double m = 0.0;
  for (std::size_t j = 0; j < g.cols(); ++j)
    for (std::size_t i = 0; i < g.rows(); ++i) m = std::max(m, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
  return m;
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
inline Matrix cholesky(const Matrix& a) {
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) throw IndefiniteError("cholesky: matrix is not positive definite");
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

/// Greedy diagonal-pivoted Cholesky of a symmetric positive semidefinite
/// matrix; returns the pivot columns whose remaining diagonal exceeds
/// drop * max diagonal (a numerically independent subset), sorted.
inline std::vector<std::size_t> independent_columns(const Matrix& g, double drop) {
  const std::size_t n = g.rows();
  std::vector<double> diag(n);
  double dmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diag[i] = g(i, i);
    dmax = std::max(dmax, diag[i]);
  }
  std::vector<std::size_t> piv;
  std::vector<std::vector<double>> l;  // columns of the factor
  std::vector<bool> used(n, false);
  while (piv.size() < n) {
    std::size_t best = n;
    double bd = drop * dmax;
    for (std::size_t i = 0; i < n; ++i)
      if (!used[i] && diag[i] > bd) {
        bd = diag[i];
        best = i;
      }
    if (best == n) break;
    used[best] = true;
    std::vector<double> col(n, 0.0);
    const double root = std::sqrt(diag[best]);
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i] && i != best) continue;
      double s = g(i, best);
      for (const auto& c : l) s -= c[i] * c[best];
      col[i] = s / root;
    }
    for (std::size_t i = 0; i < n; ++i)
      if (!used[i]) diag[i] -= col[i] * col[i];
    l.push_back(std::move(col));
    piv.push_back(best);
  }
  std::sort(piv.begin(), piv.end());
  return piv;
}

struct SymmetricEigen {
  std::vector<double> values;  // ascending
  Matrix vectors;              // orthonormal columns
};

namespace detail {

// Householder reduction to tridiagonal form; z holds the accumulated transform.
inline void tridiagonalize(Matrix& z, std::vector<double>& d, std::vector<double>& e) {
  const std::size_t n = z.rows();
  d.assign(n, 0.0);
  e.assign(n, 0.0);
  for (std::size_t ii = n; ii-- > 1;) {
    const std::size_t i = ii;
    const std::size_t l = i - 1;
    double h = 0.0;
    if (l > 0) {
      double scale = 0.0;
      for (std::size_t k = 0; k <= l; ++k) scale += std::abs(z(i, k));
      if (scale == 0.0) {
        e[i] = z(i, l);
      } else {
        for (std::size_t k = 0; k <= l; ++k) {
          z(i, k) /= scale;
          h += z(i, k) * z(i, k);
        }
        double f = z(i, l);
        double g = f >= 0.0 ? -std::sqrt(h) : std::sqrt(h);
        e[i] = scale * g;
        h -= f * g;
        z(i, l) = f - g;
        f = 0.0;
        for (std::size_t j = 0; j <= l; ++j) {
          z(j, i) = z(i, j) / h;
          g = 0.0;
          for (std::size_t k = 0; k <= j; ++k) g += z(j, k) * z(i, k);
          for (std::size_t k = j + 1; k <= l; ++k) g += z(k, j) * z(i, k);
          e[j] = g / h;
          f += e[j] * z(i, j);
        }
        const double hh = f / (h + h);
        for (std::size_t j = 0; j <= l; ++j) {
          f = z(i, j);
          e[j] = g = e[j] - hh * f;
          for (std::size_t k = 0; k <= j; ++k) z(j, k) -= (f * e[k] + g * z(i, k));
        }
      }
    } else {
      e[i] = z(i, l);
    }
    d[i] = h;
  }
  d[0] = 0.0;
  e[0] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] != 0.0) {
      for (std::size_t j = 0; j < i; ++j) {
        double g = 0.0;
        for (std::size_t k = 0; k < i; ++k) g += z(i, k) * z(k, j);
        for (std::size_t k = 0; k < i; ++k) z(k, j) -= g * z(k, i);
      }
    }
    d[i] = z(i, i);
    z(i, i) = 1.0;
    for (std::size_t j = 0; j < i; ++j) z(j, i) = z(i, j) = 0.0;
  }
}

// Implicit QL on the tridiagonal (d, e), accumulating rotations into z.
inline void tridiagonal_ql(std::vector<double>& d, std::vector<double>& e, Matrix& z) {
  const std::size_t n = d.size();
  if (n == 0) return;
  for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    int iter = 0;
    std::size_t m = l;
    while (true) {
      for (m = l; m + 1 < n; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= 1e-300 + std::numeric_limits<double>::epsilon() * dd) break;
      }
      if (m == l) break;
      if (++iter > 60) throw SolverError("tridiagonal_ql: no convergence");
      double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
      double r = std::hypot(g, 1.0);
      g = d[m] - d[l] + e[l] / (g + (g >= 0.0 ? std::abs(r) : -std::abs(r)));
      double s = 1.0, c = 1.0, p = 0.0;
      bool underflow = false;
      for (std::size_t ii = m; ii-- > l;) {
        const std::size_t i = ii;
        double f = s * e[i];
        const double b = c * e[i];
        r = std::hypot(f, g);
        e[i + 1] = r;
        if (r == 0.0) {
          d[i + 1] -= p;
          e[m] = 0.0;
          underflow = true;
          break;
        }
        s = f / r;
        c = g / r;
        g = d[i + 1] - p;
        r = (d[i] - g) * s + 2.0 * c * b;
        p = s * r;
        d[i + 1] = g + p;
        g = c * r - b;
        for (std::size_t k = 0; k < n; ++k) {
          f = z(k, i + 1);
          z(k, i + 1) = s * z(k, i) + c * f;
          z(k, i) = c * z(k, i) - s * f;
        }
      }
      if (underflow) continue;
      d[l] -= p;
      e[l] = g;
      e[m] = 0.0;
    }
  }
}

}  // namespace detail

/// Eigen-decomposition of a symmetric matrix; eigenvalues ascending.
inline SymmetricEigen symmetric_eigen(const Matrix& a) {
  MMKS_REQUIRE(a.rows() == a.cols(), "symmetric_eigen: matrix must be square");
  const std::size_t n = a.rows();
  SymmetricEigen out;
  if (n == 0) return out;
  Matrix z = a;
  symmetrize(z);
  std::vector<double> d, e;
  detail::tridiagonalize(z, d, e);
  detail::tridiagonal_ql(d, e, z);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return d[i] < d[j]; });
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = d[order[k]];
    auto src = z.col(order[k]);
    std::copy(src.begin(), src.end(), out.vectors.col(k).begin());
  }
  return out;
}

/// Solves L y = b in place for lower-triangular L.
inline void forward_substitute(const Matrix& l, std::span<double> b) {
  for (std::size_t i = 0; i < l.rows(); ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * b[k];
    b[i] = s / l(i, i);
  }
}

/// Solves Lᵀ x = b in place for lower-triangular L.
inline void backward_substitute_t(const Matrix& l, std::span<double> b) {
  for (std::size_t ii = l.rows(); ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < l.rows(); ++k) s -= l(k, ii) * b[k];
    b[ii] = s / l(ii, ii);
  }
}

/// Generalized symmetric-definite problem A C = B C Λ with CᵀBC = I.
inline SymmetricEigen generalized_eigen(const Matrix& a, const Matrix& b) {
  const std::size_t n = a.rows();
  const Matrix l = cholesky(b);
  // C = L⁻¹ A L⁻ᵀ
  Matrix tmp = a;
  for (std::size_t j = 0; j < n; ++j) forward_substitute(l, tmp.col(j));
  Matrix c = tmp.transpose();
  for (std::size_t j = 0; j < n; ++j) forward_substitute(l, c.col(j));
  auto eig = symmetric_eigen(c);
  for (std::size_t j = 0; j < n; ++j) backward_substitute_t(l, eig.vectors.col(j));
  return eig;
}

}  // namespace mmks::dense
