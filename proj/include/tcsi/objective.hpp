#pragma once

// The completion cost with feature regularization
//
//   f(G, U) = 1/2 ||P_Omega(G x_i U_i - R)||^2
//           + sum_i nu_i / 2 trace(U_i^T (I - P_i P_i^T) U_i),   nu_i = |Omega| alpha_i,
//
// its Euclidean gradient and its Riemannian gradient.

#include <memory>
#include <optional>

#include "tcsi/geometry.hpp"
#include "tcsi/observations.hpp"

namespace tcsi {

struct ProblemData {
  ObservationSet train;
  std::shared_ptr<const FeatureBasis> features;
  MultiLinearRank rank;
  std::optional<ObservationSet> test;

  const Dims3& dims() const { return train.dims(); }

  void validate() const {
    if (train.empty()) throw DimensionError("training set is empty");
    if (!features) throw DimensionError("problem has no feature basis");
    rank.validate(train.dims());
    for (std::size_t i = 0; i < 3; ++i)
      if (features->p[i].rows() != train.dims()[i]) throw DimensionError("feature basis does not match training dims");
    if (test && test->dims() != train.dims()) throw DimensionError("test set dims differ from training dims");
  }
};

struct CostParts {
  double data_term = 0.0;
  std::array<double, 3> reg_terms{0.0, 0.0, 0.0};
  double total = 0.0;
};

inline void check_point(const TuckerPoint& p, const ProblemData& data) {
  p.check_shapes();
  if (p.dims() != data.dims()) throw DimensionError("point dims " + to_string(p.dims()) + " do not match data " + to_string(data.dims()));
}

/// Cost from an already computed residual.
inline CostParts cost_from_residual(const TuckerPoint& p, const ProblemData& data, const SparseTensor3& residual) {
  CostParts c;
  for (double v : residual.values()) c.data_term += v * v;
  c.data_term *= 0.5;
  c.total = c.data_term;
  for (int i = 0; i < 3; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double nu = data.features->nu(i);
    if (nu == 0.0) continue;
    const Matrix w = p.u[k] - data.features->project(i, p.u[k]);
    c.reg_terms[k] = 0.5 * nu * w.squaredNorm();
    c.total += c.reg_terms[k];
  }
  return c;
}

inline CostParts cost(const TuckerPoint& p, const ProblemData& data) {
  check_point(p, data);
  return cost_from_residual(p, data, sparse_residual(p, data.train));
}

/// Euclidean gradient from an already computed residual S:
///   grad_G   = S x_i U_i^T
///   grad_U_i = S_(i) (U_hi (x) U_lo) G_(i)^T + nu_i (I - P_i P_i^T) U_i,
/// where lo < hi are the two modes other than i.
inline AmbientVector euclid_grad_from_residual(const TuckerPoint& p, const ProblemData& data, const SparseTensor3& residual) {
  AmbientVector g{sparse_multi_ttm_t(residual, p.u), {}};
  for (int i = 0; i < 3; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const auto [lo, hi] = other_modes(i);
    g.u[k] = sparse_mat_kron(residual, i, p.u[static_cast<std::size_t>(hi)], p.u[static_cast<std::size_t>(lo)]) *
             matricize(p.core, i).transpose();
    const double nu = data.features->nu(i);
    if (nu != 0.0) g.u[k] += nu * (p.u[k] - data.features->project(i, p.u[k]));
  }
  return g;
}

inline AmbientVector euclid_grad(const TuckerPoint& p, const ProblemData& data) {
  check_point(p, data);
  return euclid_grad_from_residual(p, data, sparse_residual(p, data.train));
}

/// Riemannian gradient: tangent projection of the metric-scaled Euclidean gradient.
inline AmbientVector riem_grad_from_euclid(const MetricContext& ctx, const AmbientVector& egrad) {
  return project_tangent(ctx, scaled_gradient(ctx, egrad));
}

inline AmbientVector riem_grad(const MetricContext& ctx, const TuckerPoint& p, const ProblemData& data) {
  return riem_grad_from_euclid(ctx, euclid_grad(p, data));
}

/// Squared chordal distance between span(U) (n x r) and span(P) (n x k), k >= r,
/// both with orthonormal columns: trace(U^T (I - P P^T) U) + k - r.
inline double chordal_distance_sq(const Matrix& u, const Matrix& p, double ortho_tol = 1e-8) {
  if (u.rows() != p.rows()) throw DimensionError("chordal_distance_sq: row mismatch");
  if (p.cols() < u.cols()) throw DimensionError("chordal_distance_sq needs k >= r");
  auto ortho_err = [](const Matrix& a) {
    return a.cols() == 0 ? 0.0 : (a.transpose() * a - Matrix::Identity(a.cols(), a.cols())).cwiseAbs().maxCoeff();
  };
  if (ortho_err(u) > ortho_tol || ortho_err(p) > ortho_tol)
    throw DimensionError("chordal_distance_sq needs orthonormal columns");
  const double proj = p.cols() == 0 ? 0.0 : (p.transpose() * u).squaredNorm();
  return static_cast<double>(u.cols()) - proj + static_cast<double>(p.cols() - u.cols());
}

}  // namespace tcsi
