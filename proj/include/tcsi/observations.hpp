#pragma once

// Sparse storage of observed entries and the kernels that only touch them.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "tcsi/tucker.hpp"

namespace tcsi {

using Index3 = std::array<Index, 3>;

/// A third-order tensor in coordinate format that is zero off its index set.
/// Indices are 0-based in memory (the text format is 1-based), unique, and kept
/// in lexicographic (i1, i2, i3) order so every traversal is reproducible.
class SparseTensor3 {
 public:
  struct Entry {
    Index3 index;
    double value;
  };

  SparseTensor3() = default;

  /// Validates, sorts and takes ownership of the entries. Throws on out of
  /// range or duplicate indices and on non-finite values.
  SparseTensor3(const Dims3& dims, std::vector<Entry> entries) : dims_(dims) {
    for (Index d : dims)
      if (d < 1) throw DimensionError("sparse tensor dimensions must be positive");
    for (const Entry& e : entries) {
      for (std::size_t m = 0; m < 3; ++m)
        if (e.index[m] < 0 || e.index[m] >= dims[m])
          throw DimensionError("index (" + std::to_string(e.index[0] + 1) + "," + std::to_string(e.index[1] + 1) + "," +
                               std::to_string(e.index[2] + 1) + ") out of range for " + to_string(dims));
      if (!std::isfinite(e.value)) throw DimensionError("non-finite observed value");
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.index < b.index; });
    for (std::size_t n = 1; n < entries.size(); ++n)
      if (entries[n].index == entries[n - 1].index)
        throw DimensionError("duplicate index (" + std::to_string(entries[n].index[0] + 1) + "," +
                             std::to_string(entries[n].index[1] + 1) + "," + std::to_string(entries[n].index[2] + 1) + ")");
    indices_.reserve(entries.size());
    values_.reserve(entries.size());
    for (const Entry& e : entries) {
      indices_.push_back(e.index);
      values_.push_back(e.value);
    }
  }

  /// Same pattern as `pattern`, new values. Used for residuals.
  static SparseTensor3 with_values(const SparseTensor3& pattern, std::vector<double> values) {
    if (values.size() != pattern.values_.size()) throw DimensionError("value count does not match pattern");
    SparseTensor3 s;
    s.dims_ = pattern.dims_;
    s.indices_ = pattern.indices_;
    s.values_ = std::move(values);
    return s;
  }

  const Dims3& dims() const { return dims_; }
  std::size_t nnz() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  const std::vector<Index3>& indices() const { return indices_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<Entry> entries() const {
    std::vector<Entry> out;
    out.reserve(nnz());
    for (std::size_t n = 0; n < nnz(); ++n) out.push_back({indices_[n], values_[n]});
    return out;
  }

  friend bool operator==(const SparseTensor3&, const SparseTensor3&) = default;

 private:
  Dims3 dims_{1, 1, 1};
  std::vector<Index3> indices_;
  std::vector<double> values_;
};

/// The observed entries of R on the sampling set.
using ObservationSet = SparseTensor3;

inline DenseTensor3 to_dense(const SparseTensor3& s) {
  DenseTensor3 d(s.dims());
  for (std::size_t n = 0; n < s.nnz(); ++n) {
    const Index3& ix = s.indices()[n];
    d(ix[0], ix[1], ix[2]) = s.values()[n];
  }
  return d;
}

/// Entries of G x_i U_i at the given indices, without forming the full tensor.
inline std::vector<double> tucker_entries_at(const DenseTensor3& core, const Matrix& u1, const Matrix& u2,
                                             const Matrix& u3, std::span<const Index3> idx) {
  const Dims3 r = core.dims();
  if (u1.cols() != r[0] || u2.cols() != r[1] || u3.cols() != r[2])
    throw DimensionError("tucker_entries_at: factor columns do not match core " + to_string(r));
  Eigen::Map<const Matrix> g1(core.data().data(), r[0], r[1] * r[2]);
  std::vector<double> out(idx.size());
  Vector kr(r[1] * r[2]);
  for (std::size_t n = 0; n < idx.size(); ++n) {
    const Index3& ix = idx[n];
    if (ix[0] < 0 || ix[0] >= u1.rows() || ix[1] < 0 || ix[1] >= u2.rows() || ix[2] < 0 || ix[2] >= u3.rows())
      throw DimensionError("tucker_entries_at: index out of range");
    for (Index c = 0; c < r[2]; ++c) kr.segment(c * r[1], r[1]) = u3(ix[2], c) * u2.row(ix[1]).transpose();
    out[n] = u1.row(ix[0]).dot(g1 * kr);
  }
  return out;
}

inline std::vector<double> tucker_entries_at(const TuckerPoint& p, std::span<const Index3> idx) {
  return tucker_entries_at(p.core, p.u[0], p.u[1], p.u[2], idx);
}

/// P_Omega(G x_i U_i - R) on the observation pattern.
inline SparseTensor3 sparse_residual(const TuckerPoint& p, const ObservationSet& obs) {
  if (p.dims() != obs.dims())
    throw DimensionError("sparse_residual: point dims " + to_string(p.dims()) + " vs observations " + to_string(obs.dims()));
  std::vector<double> v = tucker_entries_at(p, obs.indices());
  for (std::size_t n = 0; n < v.size(); ++n) v[n] -= obs.values()[n];
  return SparseTensor3::with_values(obs, std::move(v));
}

/// S_(mode) (A (x) B) for sparse S, where B is indexed by the lower-numbered
/// remaining mode and A by the higher one. Cost O(nnz * A.cols * B.cols).
inline Matrix sparse_mat_kron(const SparseTensor3& s, int mode, const Matrix& a, const Matrix& b) {
  const auto [lo, hi] = other_modes(mode);
  if (b.rows() != s.dims()[static_cast<std::size_t>(lo)] || a.rows() != s.dims()[static_cast<std::size_t>(hi)])
    throw DimensionError("sparse_mat_kron: factor rows do not match the non-" + std::to_string(mode + 1) + " modes");
  Matrix out = Matrix::Zero(s.dims()[static_cast<std::size_t>(mode)], a.cols() * b.cols());
  for (std::size_t n = 0; n < s.nnz(); ++n) {
    const Index3& ix = s.indices()[n];
    const double v = s.values()[n];
    const Index row = ix[static_cast<std::size_t>(mode)];
    const Index ia = ix[static_cast<std::size_t>(hi)];
    const Index ib = ix[static_cast<std::size_t>(lo)];
    for (Index ca = 0; ca < a.cols(); ++ca) {
      const double w = v * a(ia, ca);
      out.row(row).segment(ca * b.cols(), b.cols()) += w * b.row(ib);
    }
  }
  return out;
}

/// S x_1 U1^T x_2 U2^T x_3 U3^T for sparse S.
inline DenseTensor3 sparse_multi_ttm_t(const SparseTensor3& s, const std::array<Matrix, 3>& u) {
  for (std::size_t m = 0; m < 3; ++m)
    if (u[m].rows() != s.dims()[m]) throw DimensionError("sparse_multi_ttm_t: factor rows do not match dims");
  DenseTensor3 out({u[0].cols(), u[1].cols(), u[2].cols()});
  Eigen::Map<Matrix> o1(out.data().data(), u[0].cols(), u[1].cols() * u[2].cols());
  Vector kr(u[1].cols() * u[2].cols());
  for (std::size_t n = 0; n < s.nnz(); ++n) {
    const Index3& ix = s.indices()[n];
    for (Index c = 0; c < u[2].cols(); ++c) kr.segment(c * u[1].cols(), u[1].cols()) = u[2](ix[2], c) * u[1].row(ix[1]).transpose();
    o1.noalias() += s.values()[n] * u[0].row(ix[0]).transpose() * kr.transpose();
  }
  return out;
}

/// S_(mode) S_(mode)^T accumulated fibre by fibre, for spectral initialization.
inline Matrix sparse_unfolding_gram(const SparseTensor3& s, int mode) {
  check_mode(mode);
  const Dims3& d = s.dims();
  std::vector<std::size_t> order(s.nnz());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto col = [&](std::size_t n) {
    const Index3& ix = s.indices()[n];
    return unfolding_column(d, mode, ix[0], ix[1], ix[2]);
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return col(a) < col(b); });
  Matrix gram = Matrix::Zero(d[static_cast<std::size_t>(mode)], d[static_cast<std::size_t>(mode)]);
  std::size_t start = 0;
  while (start < order.size()) {
    std::size_t end = start;
    while (end < order.size() && col(order[end]) == col(order[start])) ++end;
    for (std::size_t a = start; a < end; ++a)
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t na = order[a], nb = order[b];
        gram(s.indices()[na][static_cast<std::size_t>(mode)], s.indices()[nb][static_cast<std::size_t>(mode)]) +=
            s.values()[na] * s.values()[nb];
      }
    start = end;
  }
  return gram;
}

inline double rmse(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) throw DimensionError("rmse: length mismatch");
  if (actual.empty()) throw DimensionError("rmse: empty evaluation set");
  double ss = 0.0;
  for (std::size_t n = 0; n < actual.size(); ++n) {
    const double d = predicted[n] - actual[n];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(actual.size()));
}

/// RMSE of the point on `obs`.
inline double rmse(const TuckerPoint& p, const ObservationSet& obs) {
  return rmse(tucker_entries_at(p, obs.indices()), obs.values());
}

/// RMSE divided by the range (max - min) of the reference values. A constant
/// reference set has zero range; the plain RMSE is returned in that case.
inline double nrmse(const TuckerPoint& p, const ObservationSet& obs) {
  const double e = rmse(p, obs);
  const auto [lo, hi] = std::minmax_element(obs.values().begin(), obs.values().end());
  const double range = *hi - *lo;
  return range > 0 ? e / range : e;
}

}  // namespace tcsi
