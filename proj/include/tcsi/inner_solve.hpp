#pragma once

// Linear solves over triples of small symmetric or skew-symmetric matrices.
//
// The projector systems are symmetric positive definite operators on these
// spaces under the Frobenius inner product, so conjugate gradients applies
// without vectorizing anything. The unknowns are r_i x r_i, which keeps a dense
// fallback on the structured coordinates affordable when CG stalls.

#include <array>
#include <cmath>

#include "tcsi/tensor.hpp"

namespace tcsi {

using MatrixTriple = std::array<Matrix, 3>;

enum class MatrixStructure { symmetric, skew };

struct InnerSolveOptions {
  int max_iters = 200;
  double rel_tol = 1e-12;
};

struct InnerSolveStats {
  int iterations = 0;
  double relative_residual = 0.0;
  bool dense_fallback = false;
};

namespace detail {

inline double frob_inner(const MatrixTriple& a, const MatrixTriple& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < 3; ++i) s += (a[i].array() * b[i].array()).sum();
  return s;
}

inline MatrixTriple zeros_like(const MatrixTriple& a) {
  MatrixTriple z;
  for (std::size_t i = 0; i < 3; ++i) z[i] = Matrix::Zero(a[i].rows(), a[i].cols());
  return z;
}

inline Index structured_dim(Index r, MatrixStructure st) {
  return st == MatrixStructure::symmetric ? r * (r + 1) / 2 : r * (r - 1) / 2;
}

// Orthonormal basis element `n` of the structured r x r space.
inline Matrix structured_basis(Index r, Index n, MatrixStructure st) {
  Matrix e = Matrix::Zero(r, r);
  Index count = 0;
  for (Index a = 0; a < r; ++a)
    for (Index b = (st == MatrixStructure::symmetric ? a : a + 1); b < r; ++b, ++count) {
      if (count != n) continue;
      if (a == b) {
        e(a, a) = 1.0;
      } else {
        e(a, b) = M_SQRT1_2;
        e(b, a) = st == MatrixStructure::symmetric ? M_SQRT1_2 : -M_SQRT1_2;
      }
      return e;
    }
  return e;
}

inline void structured_coords(const Matrix& m, MatrixStructure st, Eigen::Ref<Vector> out) {
  Index count = 0;
  for (Index a = 0; a < m.rows(); ++a)
    for (Index b = (st == MatrixStructure::symmetric ? a : a + 1); b < m.rows(); ++b, ++count)
      out(count) = a == b ? m(a, a) : M_SQRT1_2 * (m(a, b) + (st == MatrixStructure::symmetric ? m(b, a) : -m(b, a)));
}

}  // namespace detail

/// Dense solve of op(X) = rhs on the structured coordinates. Throws SolveError
/// when the assembled operator is singular.
template <class Op>
MatrixTriple solve_structured_dense(const Op& op, const MatrixTriple& rhs, MatrixStructure st) {
  std::array<Index, 3> offsets{};
  Index dim = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    offsets[i] = dim;
    dim += detail::structured_dim(rhs[i].rows(), st);
  }
  MatrixTriple x = detail::zeros_like(rhs);
  if (dim == 0) return x;
  Matrix k(dim, dim);
  Vector b(dim);
  for (std::size_t i = 0; i < 3; ++i) detail::structured_coords(rhs[i], st, b.segment(offsets[i], detail::structured_dim(rhs[i].rows(), st)));
  for (std::size_t j = 0; j < 3; ++j) {
    const Index dj = detail::structured_dim(rhs[j].rows(), st);
    for (Index n = 0; n < dj; ++n) {
      MatrixTriple e = detail::zeros_like(rhs);
      e[j] = detail::structured_basis(rhs[j].rows(), n, st);
      const MatrixTriple ae = op(e);
      for (std::size_t i = 0; i < 3; ++i)
        detail::structured_coords(ae[i], st, k.col(offsets[j] + n).segment(offsets[i], detail::structured_dim(rhs[i].rows(), st)));
    }
  }
  Eigen::FullPivLU<Matrix> lu(k);
  lu.setThreshold(1e-14);
  if (!lu.isInvertible()) throw SolveError("structured dense solve: operator is singular", b.norm());
  const Vector c = lu.solve(b);
  for (std::size_t i = 0; i < 3; ++i) {
    const Index di = detail::structured_dim(rhs[i].rows(), st);
    for (Index n = 0; n < di; ++n) x[i] += c(offsets[i] + n) * detail::structured_basis(rhs[i].rows(), n, st);
  }
  return x;
}

/// Conjugate gradients for a symmetric positive definite operator on triples
/// of symmetric (or skew) matrices, with a dense fallback when the relative
/// residual target is missed within the iteration cap.
template <class Op>
MatrixTriple solve_structured(const Op& op, const MatrixTriple& rhs, MatrixStructure st,
                              const InnerSolveOptions& opts = {}, InnerSolveStats* stats = nullptr) {
  InnerSolveStats local;
  InnerSolveStats& st_out = stats ? *stats : local;
  st_out = {};
  const double rhs_norm = std::sqrt(detail::frob_inner(rhs, rhs));
  MatrixTriple x = detail::zeros_like(rhs);
  if (rhs_norm == 0.0) return x;

  MatrixTriple r = rhs;
  MatrixTriple p = r;
  double rr = detail::frob_inner(r, r);
  const double target = opts.rel_tol * rhs_norm;
  int it = 0;
  for (; it < opts.max_iters && std::sqrt(rr) > target; ++it) {
    const MatrixTriple ap = op(p);
    const double pap = detail::frob_inner(p, ap);
    if (!(pap > 0.0)) break;
    const double alpha = rr / pap;
    for (std::size_t i = 0; i < 3; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    const double rr_new = detail::frob_inner(r, r);
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < 3; ++i) p[i] = r[i] + beta * p[i];
  }
  st_out.iterations = it;

  auto true_residual = [&](const MatrixTriple& sol) {
    const MatrixTriple a = op(sol);
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) s += (rhs[i] - a[i]).squaredNorm();
    return std::sqrt(s) / rhs_norm;
  };
  st_out.relative_residual = true_residual(x);
  if (std::isfinite(st_out.relative_residual) && st_out.relative_residual <= opts.rel_tol) return x;

  MatrixTriple xd = solve_structured_dense(op, rhs, st);
  const double dense_res = true_residual(xd);
  st_out.dense_fallback = true;
  // Keep whichever solution is more accurate; both are valid up to rounding.
  if (!(dense_res <= st_out.relative_residual)) return x;
  st_out.relative_residual = dense_res;
  return xd;
}

}  // namespace tcsi
