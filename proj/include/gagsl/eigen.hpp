#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "gagsl/error.hpp"
#include "gagsl/matrix.hpp"

namespace gagsl {

struct EigenDecomposition {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column j pairs with values[j]
};

namespace detail {

inline double offdiag_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace detail

// Cyclic Jacobi eigensolver for symmetric matrices. Converges when the
// off-diagonal Frobenius norm drops below 1e-10 * ||M||_F; hard cap at 100
// full sweeps. Adequate for the dense, desk-scale matrices used here.
inline EigenDecomposition eigendecompose_sym(const Matrix& m) {
  if (m.rows() != m.cols()) throw ContractViolation("eigendecompose_sym: matrix not square");
  if (!m.all_finite()) throw ContractViolation("eigendecompose_sym: non-finite entries");
  if (!m.is_symmetric(1e-12 * std::max(1.0, m.max_abs())))
    throw ContractViolation("eigendecompose_sym: matrix not symmetric");

  const std::size_t n = m.rows();
  Matrix a = m;
  Matrix u = Matrix::identity(n);
  const double target = 1e-10 * m.frobenius_norm();

  for (int sweep = 0; sweep < 100; ++sweep) {
    if (detail::offdiag_norm(a) <= target) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        // Stable rotation angle: tan(2θ) = 2apq / (aqq - app).
        const double theta = 0.5 * (aqq - app) / apq;
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double ukp = u(k, p);
          const double ukq = u(k, q);
          u(k, p) = c * ukp - s * ukq;
          u(k, q) = s * ukp + c * ukq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });

  EigenDecomposition out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = u(i, order[j]);
  }
  return out;
}

// Solve M x = b for square M via partial-pivot LU. Dense, in place on a copy.
inline std::vector<double> solve_linear(const Matrix& m, const std::vector<double>& b) {
  if (m.rows() != m.cols()) throw ContractViolation("solve_linear: matrix not square");
  if (b.size() != m.rows()) throw ContractViolation("solve_linear: rhs length mismatch");
  const std::size_t n = m.rows();
  Matrix lu = m;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});

  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    double best = std::fabs(lu(col, col));
    for (std::size_t r = col + 1; r < n; ++r) {
      const double v = std::fabs(lu(r, col));
      if (v > best) {
        best = v;
        pivot = r;
      }
    }
    if (best == 0.0) throw NumericError("solve_linear: singular matrix at column " +
                                        std::to_string(col));
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(col, j), lu(pivot, j));
      std::swap(perm[col], perm[pivot]);
    }
    const double inv = 1.0 / lu(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = lu(r, col) * inv;
      lu(r, col) = f;
      for (std::size_t j = col + 1; j < n; ++j) lu(r, j) -= f * lu(col, j);
    }
  }

  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = b[perm[i]];
    for (std::size_t j = 0; j < i; ++j) v -= lu(i, j) * x[j];
    x[i] = v;
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double v = x[ii];
    for (std::size_t j = ii + 1; j < n; ++j) v -= lu(ii, j) * x[j];
    x[ii] = v / lu(ii, ii);
  }
  return x;
}

// Solve M X = B column-by-column with one shared factorization.
inline Matrix solve_linear(const Matrix& m, const Matrix& b) {
  if (m.rows() != m.cols()) throw ContractViolation("solve_linear: matrix not square");
  if (b.rows() != m.rows()) throw ContractViolation("solve_linear: rhs rows mismatch");
  const std::size_t n = m.rows();
  Matrix lu = m;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});

  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    double best = std::fabs(lu(col, col));
    for (std::size_t r = col + 1; r < n; ++r) {
      const double v = std::fabs(lu(r, col));
      if (v > best) {
        best = v;
        pivot = r;
      }
    }
    if (best == 0.0) throw NumericError("solve_linear: singular matrix at column " +
                                        std::to_string(col));
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(col, j), lu(pivot, j));
      std::swap(perm[col], perm[pivot]);
    }
    const double inv = 1.0 / lu(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = lu(r, col) * inv;
      lu(r, col) = f;
      for (std::size_t j = col + 1; j < n; ++j) lu(r, j) -= f * lu(col, j);
    }
  }

  Matrix x(n, b.cols());
  std::vector<double> y(n);
  for (std::size_t c = 0; c < b.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double v = b(perm[i], c);
      for (std::size_t j = 0; j < i; ++j) v -= lu(i, j) * y[j];
      y[i] = v;
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double v = y[ii];
      for (std::size_t j = ii + 1; j < n; ++j) v -= lu(ii, j) * y[j];
      y[ii] = v / lu(ii, ii);
    }
    for (std::size_t i = 0; i < n; ++i) x(i, c) = y[i];
  }
  return x;
}

}  // namespace gagsl
