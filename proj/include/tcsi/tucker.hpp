#pragma once

#include <array>
#include <cmath>

#include "tcsi/tensor.hpp"

namespace tcsi {

/// A point (G, U1, U2, U3) of the total space: an r1 x r2 x r3 core and three
/// factors with orthonormal columns. It represents the tensor G x_i U_i and,
/// through it, the whole class {(G x_i O_i^T, U_i O_i)} of rotated factors.
struct TuckerPoint {
  DenseTensor3 core;
  std::array<Matrix, 3> u;

  Dims3 dims() const { return {u[0].rows(), u[1].rows(), u[2].rows()}; }
  MultiLinearRank rank() const { return {{core.dim(0), core.dim(1), core.dim(2)}}; }

  DenseTensor3 full() const { return tucker_to_full(core, u); }

  void check_shapes() const {
    for (int i = 0; i < 3; ++i)
      if (u[static_cast<std::size_t>(i)].cols() != core.dim(i))
        throw DimensionError("factor " + std::to_string(i + 1) + " has " +
                             std::to_string(u[static_cast<std::size_t>(i)].cols()) + " columns, core mode has " +
                             std::to_string(core.dim(i)));
  }

  /// Largest |U_i^T U_i - I| entry over the three factors.
  double orthonormality_error() const {
    double err = 0.0;
    for (const Matrix& ui : u)
      err = std::max(err, (ui.transpose() * ui - Matrix::Identity(ui.cols(), ui.cols())).cwiseAbs().maxCoeff());
    return err;
  }
};

/// An element (Z_G, Z_1, Z_2, Z_3) of the ambient Euclidean space in which
/// tangent and horizontal vectors live.
struct AmbientVector {
  DenseTensor3 core;
  std::array<Matrix, 3> u;

  static AmbientVector zeros_like(const TuckerPoint& p) {
    AmbientVector v{DenseTensor3(p.core.dims()), {}};
    for (std::size_t i = 0; i < 3; ++i) v.u[i] = Matrix::Zero(p.u[i].rows(), p.u[i].cols());
    return v;
  }

  AmbientVector& operator+=(const AmbientVector& o) {
    core += o.core;
    for (std::size_t i = 0; i < 3; ++i) u[i] += o.u[i];
    return *this;
  }
  AmbientVector& operator-=(const AmbientVector& o) {
    core -= o.core;
    for (std::size_t i = 0; i < 3; ++i) u[i] -= o.u[i];
    return *this;
  }
  AmbientVector& operator*=(double s) {
    core *= s;
    for (auto& m : u) m *= s;
    return *this;
  }
  friend AmbientVector operator+(AmbientVector a, const AmbientVector& b) { return a += b; }
  friend AmbientVector operator-(AmbientVector a, const AmbientVector& b) { return a -= b; }
  friend AmbientVector operator*(double s, AmbientVector a) { return a *= s; }
  friend AmbientVector operator-(AmbientVector a) { return a *= -1.0; }
};

/// Plain Euclidean inner product on the ambient space.
inline double euclid_inner(const AmbientVector& a, const AmbientVector& b) {
  double s = inner(a.core, b.core);
  for (std::size_t i = 0; i < 3; ++i) s += (a.u[i].array() * b.u[i].array()).sum();
  return s;
}

inline double euclid_norm(const AmbientVector& a) { return std::sqrt(euclid_inner(a, a)); }

/// Move a point within its class: (G x_i O_i^T, U_i O_i).
inline TuckerPoint rotate(const TuckerPoint& p, const std::array<Matrix, 3>& o) {
  TuckerPoint q{p.core, {}};
  for (int i = 0; i < 3; ++i) {
    const auto s = static_cast<std::size_t>(i);
    q.core = mode_product(q.core, o[s].transpose(), i);
    q.u[s] = p.u[s] * o[s];
  }
  return q;
}

/// The matching transformation of a vector anchored at p: (eta_G x_i O_i^T, eta_i O_i).
inline AmbientVector rotate(const AmbientVector& v, const std::array<Matrix, 3>& o) {
  AmbientVector w{v.core, {}};
  for (int i = 0; i < 3; ++i) {
    const auto s = static_cast<std::size_t>(i);
    w.core = mode_product(w.core, o[s].transpose(), i);
    w.u[s] = v.u[s] * o[s];
  }
  return w;
}

/// Differential of the map (G, U) -> G x_i U_i applied to v, as a dense tensor:
/// v_G x_i U_i + sum_i G x_i v_i x_{j != i} U_j.
inline DenseTensor3 tangent_to_full(const TuckerPoint& p, const AmbientVector& v) {
  DenseTensor3 out = tucker_to_full(v.core, p.u);
  out += tucker_to_full(p.core, v.u[0], p.u[1], p.u[2]);
  out += tucker_to_full(p.core, p.u[0], v.u[1], p.u[2]);
  out += tucker_to_full(p.core, p.u[0], p.u[1], v.u[2]);
  return out;
}

}  // namespace tcsi
