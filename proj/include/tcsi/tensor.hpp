#pragma once

// Dense third-order tensors and the small-matrix kernels the Tucker geometry
// is built from.
//
// Storage is column-major: element (i1, i2, i3) lives at i1 + n1*(i2 + n2*i3).
// Mode-k matricization follows Kolda & Bader: row index i_k, and the column
// index runs over the remaining two modes with the lower-numbered one varying
// fastest. Under this convention
//
//   X = G x1 U1 x2 U2 x3 U3   <=>   X_(1) = U1 G_(1) (U3 (x) U2)^T
//
// and analogously for modes 2 and 3. Modes are 0-based in code.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "tcsi/errors.hpp"

namespace tcsi {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Dims3 = std::array<Index, 3>;

inline std::string to_string(const Dims3& d) {
  return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
}

inline void check_mode(int mode) {
  if (mode < 0 || mode > 2) throw DimensionError("mode index must be 0, 1 or 2, got " + std::to_string(mode));
}

/// The two modes other than `mode`, lower first.
inline std::array<int, 2> other_modes(int mode) {
  check_mode(mode);
  switch (mode) {
    case 0: return {1, 2};
    case 1: return {0, 2};
    default: return {0, 1};
  }
}

/// Multilinear rank (r1, r2, r3).
struct MultiLinearRank {
  std::array<Index, 3> r{1, 1, 1};

  Index operator[](int i) const { return r[static_cast<std::size_t>(i)]; }
  Index product() const { return r[0] * r[1] * r[2]; }

  void validate(const Dims3& dims) const {
    for (int i = 0; i < 3; ++i) {
      if ((*this)[i] < 1) throw DimensionError("rank entries must be >= 1");
      if ((*this)[i] > dims[static_cast<std::size_t>(i)])
        throw DimensionError("rank " + std::to_string((*this)[i]) + " exceeds dimension " +
                             std::to_string(dims[static_cast<std::size_t>(i)]) + " in mode " + std::to_string(i + 1));
    }
  }
  friend bool operator==(const MultiLinearRank&, const MultiLinearRank&) = default;
};

class DenseTensor3 {
 public:
  DenseTensor3() = default;

  explicit DenseTensor3(const Dims3& dims, double fill = 0.0) : dims_(dims) {
    for (Index d : dims)
      if (d < 1) throw DimensionError("tensor dimensions must be positive, got " + to_string(dims));
    data_.assign(static_cast<std::size_t>(dims[0] * dims[1] * dims[2]), fill);
  }

  DenseTensor3(const Dims3& dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
    for (Index d : dims)
      if (d < 1) throw DimensionError("tensor dimensions must be positive, got " + to_string(dims));
    if (static_cast<Index>(data_.size()) != dims[0] * dims[1] * dims[2])
      throw DimensionError("data length does not match dims " + to_string(dims));
  }

  const Dims3& dims() const { return dims_; }
  Index dim(int mode) const { return dims_[static_cast<std::size_t>(mode)]; }
  Index size() const { return static_cast<Index>(data_.size()); }

  double& operator()(Index i, Index j, Index k) { return data_[offset(i, j, k)]; }
  double operator()(Index i, Index j, Index k) const { return data_[offset(i, j, k)]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  Eigen::Map<Vector> vec() { return {data_.data(), size()}; }
  Eigen::Map<const Vector> vec() const { return {data_.data(), size()}; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  DenseTensor3& operator+=(const DenseTensor3& o) {
    require_same_dims(o);
    vec() += o.vec();
    return *this;
  }
  DenseTensor3& operator-=(const DenseTensor3& o) {
    require_same_dims(o);
    vec() -= o.vec();
    return *this;
  }
  DenseTensor3& operator*=(double s) {
    vec() *= s;
    return *this;
  }
  friend DenseTensor3 operator+(DenseTensor3 a, const DenseTensor3& b) { return a += b; }
  friend DenseTensor3 operator-(DenseTensor3 a, const DenseTensor3& b) { return a -= b; }
  friend DenseTensor3 operator*(double s, DenseTensor3 a) { return a *= s; }
  friend DenseTensor3 operator*(DenseTensor3 a, double s) { return a *= s; }
  friend bool operator==(const DenseTensor3&, const DenseTensor3&) = default;

  void require_same_dims(const DenseTensor3& o) const {
    if (dims_ != o.dims_) throw DimensionError("tensor dims mismatch: " + to_string(dims_) + " vs " + to_string(o.dims_));
  }

 private:
  std::size_t offset(Index i, Index j, Index k) const {
    return static_cast<std::size_t>(i + dims_[0] * (j + dims_[1] * k));
  }

  Dims3 dims_{1, 1, 1};
  std::vector<double> data_{0.0};
};

/// Column of element (i1, i2, i3) in the mode-`mode` matricization.
inline Index unfolding_column(const Dims3& dims, int mode, Index i1, Index i2, Index i3) {
  switch (mode) {
    case 0: return i2 + dims[1] * i3;
    case 1: return i1 + dims[0] * i3;
    default: return i1 + dims[0] * i2;
  }
}

inline Matrix matricize(const DenseTensor3& x, int mode) {
  check_mode(mode);
  const Dims3& d = x.dims();
  const Index rows = d[static_cast<std::size_t>(mode)];
  Matrix m(rows, x.size() / rows);
  for (Index k = 0; k < d[2]; ++k)
    for (Index j = 0; j < d[1]; ++j)
      for (Index i = 0; i < d[0]; ++i) {
        const std::array<Index, 3> idx{i, j, k};
        m(idx[static_cast<std::size_t>(mode)], unfolding_column(d, mode, i, j, k)) = x(i, j, k);
      }
  return m;
}

inline DenseTensor3 dematricize(const Matrix& m, int mode, const Dims3& dims) {
  check_mode(mode);
  DenseTensor3 x(dims);
  if (m.rows() != dims[static_cast<std::size_t>(mode)] || m.rows() * m.cols() != x.size())
    throw DimensionError("matrix " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         " is not a mode-" + std::to_string(mode + 1) + " unfolding of " + to_string(dims));
  for (Index k = 0; k < dims[2]; ++k)
    for (Index j = 0; j < dims[1]; ++j)
      for (Index i = 0; i < dims[0]; ++i) {
        const std::array<Index, 3> idx{i, j, k};
        x(i, j, k) = m(idx[static_cast<std::size_t>(mode)], unfolding_column(dims, mode, i, j, k));
      }
  return x;
}

/// X x_mode A, i.e. the tensor whose mode-`mode` unfolding is A * X_(mode).
inline DenseTensor3 mode_product(const DenseTensor3& x, const Matrix& a, int mode) {
  check_mode(mode);
  const Dims3& d = x.dims();
  if (a.cols() != x.dim(mode))
    throw DimensionError("mode product: matrix has " + std::to_string(a.cols()) + " columns, tensor mode " +
                         std::to_string(mode + 1) + " has size " + std::to_string(x.dim(mode)));
  Dims3 out_dims = d;
  out_dims[static_cast<std::size_t>(mode)] = a.rows();
  DenseTensor3 out(out_dims);
  // Each case maps the raw column-major buffer onto a matrix view so the
  // product runs through Eigen's GEMM.
  if (mode == 0) {
    Eigen::Map<const Matrix> xm(x.data().data(), d[0], d[1] * d[2]);
    Eigen::Map<Matrix> om(out.data().data(), a.rows(), d[1] * d[2]);
    om.noalias() = a * xm;
  } else if (mode == 2) {
    Eigen::Map<const Matrix> xm(x.data().data(), d[0] * d[1], d[2]);
    Eigen::Map<Matrix> om(out.data().data(), d[0] * d[1], a.rows());
    om.noalias() = xm * a.transpose();
  } else {
    for (Index k = 0; k < d[2]; ++k) {
      Eigen::Map<const Matrix> slice(x.data().data() + k * d[0] * d[1], d[0], d[1]);
      Eigen::Map<Matrix> oslice(out.data().data() + k * d[0] * a.rows(), d[0], a.rows());
      oslice.noalias() = slice * a.transpose();
    }
  }
  return out;
}

inline DenseTensor3 tucker_to_full(const DenseTensor3& core, const Matrix& u1, const Matrix& u2, const Matrix& u3) {
  return mode_product(mode_product(mode_product(core, u1, 0), u2, 1), u3, 2);
}

inline DenseTensor3 tucker_to_full(const DenseTensor3& core, const std::array<Matrix, 3>& u) {
  return tucker_to_full(core, u[0], u[1], u[2]);
}

inline double inner(const DenseTensor3& x, const DenseTensor3& y) {
  x.require_same_dims(y);
  return x.vec().dot(y.vec());
}

inline double frob_norm(const DenseTensor3& x) { return x.vec().norm(); }

inline Matrix sym(const Matrix& a) { return 0.5 * (a + a.transpose()); }
inline Matrix skw(const Matrix& a) { return 0.5 * (a - a.transpose()); }

/// Orthonormal factor of A with full column rank: the polar factor
/// Q = A (A^T A)^{-1/2}, computed from the thin SVD as U V^T. It is the
/// unique orthonormal matrix nearest to A and satisfies uf(A O) = uf(A) O for
/// orthogonal O.
inline Matrix uf(const Matrix& a, double rank_tol = 1e-13) {
  if (a.cols() == 0) return a;
  if (a.rows() < a.cols())
    throw DimensionError("uf needs rows >= cols, got " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (!(s(s.size() - 1) > rank_tol * std::max(s(0), 1e-300)))
    throw RankDeficiencyError("uf: matrix is numerically rank deficient (sigma_min/sigma_max = " +
                              std::to_string(s(s.size() - 1) / std::max(s(0), 1e-300)) + ")");
  return svd.matrixU() * svd.matrixV().transpose();
}

/// Orthonormal basis of span(A) from a thin Householder QR.
inline Matrix orthonormal_basis(const Matrix& a, double rank_tol = 1e-12) {
  if (a.cols() == 0) return a;
  if (a.rows() < a.cols()) throw DimensionError("orthonormal_basis needs rows >= cols");
  Eigen::HouseholderQR<Matrix> qr(a);
  const Matrix r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
  const double scale = std::max(r.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  if (r.diagonal().cwiseAbs().minCoeff() <= rank_tol * scale)
    throw RankDeficiencyError("feature matrix is numerically rank deficient");
  Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
  for (Index j = 0; j < q.cols(); ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

/// M * (A (x) B) without forming the Kronecker product. Row a*B.rows() + b of
/// A (x) B pairs row a of A with row b of B.
inline Matrix kron_apply(const Matrix& m, const Matrix& a, const Matrix& b) {
  if (m.cols() != a.rows() * b.rows())
    throw DimensionError("kron_apply: M has " + std::to_string(m.cols()) + " columns, expected " +
                         std::to_string(a.rows() * b.rows()));
  Matrix out(m.rows(), a.cols() * b.cols());
  Matrix row(b.rows(), a.rows());
  for (Index p = 0; p < m.rows(); ++p) {
    for (Index ar = 0; ar < a.rows(); ++ar) row.col(ar) = m.row(p).segment(ar * b.rows(), b.rows()).transpose();
    const Matrix t = b.transpose() * row * a;  // (B.cols x A.cols), column-major = output ordering
    out.row(p) = Eigen::Map<const Vector>(t.data(), t.size()).transpose();
  }
  return out;
}

/// Random orthogonal matrix from the QR of a Gaussian matrix. Test and
/// verification helper.
template <class Rng>
Matrix random_orthogonal(Index n, Rng& rng) {
  std::normal_distribution<double> nd;
  Matrix a(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) a(i, j) = nd(rng);
  return orthonormal_basis(a);
}

template <class Rng>
Matrix gaussian_matrix(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> nd;
  Matrix a(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) a(i, j) = nd(rng);
  return a;
}

template <class Rng>
DenseTensor3 gaussian_tensor(const Dims3& dims, Rng& rng) {
  std::normal_distribution<double> nd;
  DenseTensor3 t(dims);
  for (double& v : t.data()) v = nd(rng);
  return t;
}

}  // namespace tcsi
