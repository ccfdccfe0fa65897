#pragma once

// Geometry of the Tucker quotient manifold under the side-information metric
//
//   <eta, xi>_X = sum_i <eta_i, xi_i G_i> + <eta_G, xi_G>
//               + sum_i mu_i <eta_i, (I - P_i P_i^T) xi_i>,      G_i = G_(i) G_(i)^T,
//
// with mu_i = N alpha_i. Setting every mu_i = 0 gives the least-squares metric.
//
// Per factor the metric acts as the self-adjoint map
//   M_i(X) = P_i P_i^T X G_i + (I - P_i P_i^T) X G_ai,   G_ai = G_i + mu_i I,
// whose inverse is P_i P_i^T X G_i^{-1} + (I - P_i P_i^T) X G_ai^{-1}. Every
// projector below is written in terms of M_i, its inverse, and the vertical
// directions (-sum_i G x_i Om_i, U_i Om_i) with skew Om_i.

#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "tcsi/inner_solve.hpp"
#include "tcsi/tucker.hpp"

namespace tcsi {

/// Orthonormal feature matrices P_i (n_i x k_i, k_i may be 0 for "no side
/// information") with their weights alpha_i.
struct FeatureBasis {
  std::array<Matrix, 3> p;
  std::array<double, 3> alpha{0.0, 0.0, 0.0};
  double n_total = 1.0;      // N = n1 n2 n3
  std::size_t n_obs = 0;     // |Omega|
  std::vector<std::string> warnings;

  /// Weight of the feature term in the metric, N alpha_i.
  double mu(int i) const { return n_total * alpha[static_cast<std::size_t>(i)]; }
  /// Weight of the feature term in the cost, |Omega| alpha_i.
  double nu(int i) const { return static_cast<double>(n_obs) * alpha[static_cast<std::size_t>(i)]; }
  Index k(int i) const { return p[static_cast<std::size_t>(i)].cols(); }

  /// P_i P_i^T X.
  Matrix project(int i, const Matrix& x) const {
    const Matrix& pi = p[static_cast<std::size_t>(i)];
    if (pi.cols() == 0) return Matrix::Zero(x.rows(), x.cols());
    return pi * (pi.transpose() * x);
  }

  /// Orthonormalizes raw feature matrices (an empty matrix means no features
  /// for that mode) and checks them against dims and rank.
  static FeatureBasis from_raw(const std::array<Matrix, 3>& raw, const std::array<double, 3>& alpha, const Dims3& dims,
                               std::size_t n_obs, const MultiLinearRank& rank) {
    FeatureBasis f;
    f.alpha = alpha;
    f.n_total = static_cast<double>(dims[0]) * static_cast<double>(dims[1]) * static_cast<double>(dims[2]);
    f.n_obs = n_obs;
    for (int i = 0; i < 3; ++i) {
      const auto s = static_cast<std::size_t>(i);
      if (!(alpha[s] >= 0.0) || !std::isfinite(alpha[s])) throw DimensionError("alpha must be finite and >= 0");
      if (raw[s].size() == 0) {
        f.p[s] = Matrix::Zero(dims[s], 0);
        continue;
      }
      if (raw[s].rows() != dims[s])
        throw DimensionError("feature matrix " + std::to_string(i + 1) + " has " + std::to_string(raw[s].rows()) +
                             " rows, expected " + std::to_string(dims[s]));
      f.p[s] = orthonormal_basis(raw[s]);
      if (f.p[s].cols() < rank[i])
        f.warnings.push_back("mode " + std::to_string(i + 1) + ": feature count " + std::to_string(f.p[s].cols()) +
                             " is below the rank " + std::to_string(rank[i]));
    }
    return f;
  }

  /// No side information at all: alpha = 0 and empty bases.
  static FeatureBasis none(const Dims3& dims, std::size_t n_obs) {
    return from_raw({Matrix(), Matrix(), Matrix()}, {0.0, 0.0, 0.0}, dims, n_obs, MultiLinearRank{});
  }
};

struct GeometryOptions {
  InnerSolveOptions inner;
  /// Tolerance of the tangent / horizontal membership checks, relative to the
  /// size of the vector being checked.
  double flag_tol = 1e-8;
};

/// Everything the metric and the projectors need at one point, computed once.
class MetricContext {
 public:
  MetricContext(TuckerPoint point, std::shared_ptr<const FeatureBasis> features, std::array<double, 3> mu,
                GeometryOptions opts = {})
      : point_(std::move(point)), features_(std::move(features)), mu_(mu), opts_(opts) {
    point_.check_shapes();
    if (!features_) throw DimensionError("MetricContext needs a feature basis");
    for (int i = 0; i < 3; ++i) {
      const auto s = static_cast<std::size_t>(i);
      if (features_->p[s].rows() != point_.u[s].rows()) throw DimensionError("feature basis does not match point dims");
      if (!(mu_[s] >= 0.0)) throw DimensionError("metric weight mu must be >= 0");
      g_unfold_[s] = matricize(point_.core, i);
      g_[s] = g_unfold_[s] * g_unfold_[s].transpose();
      const Index r = g_[s].rows();
      Eigen::SelfAdjointEigenSolver<Matrix> es(g_[s], Eigen::EigenvaluesOnly);
      const double lmax = es.eigenvalues().maxCoeff();
      const double lmin = es.eigenvalues().minCoeff();
      if (!(lmin > 1e-12 * lmax)) {
        const double delta = std::max(1e-12 * g_[s].trace() / static_cast<double>(r), 1e-300);
        g_[s] += delta * Matrix::Identity(r, r);
        regularized_ = true;
      }
      g_alpha_[s] = g_[s] + mu_[s] * Matrix::Identity(r, r);
      llt_g_[s].compute(g_[s]);
      llt_g_alpha_[s].compute(g_alpha_[s]);
      v_[s] = features_->project(i, point_.u[s]);
      w_[s] = point_.u[s] - v_[s];
      vtv_[s] = v_[s].transpose() * v_[s];
      wtw_[s] = w_[s].transpose() * w_[s];
    }
  }

  /// Metric of the side-information model, mu_i = N alpha_i.
  static MetricContext preconditioned(TuckerPoint point, std::shared_ptr<const FeatureBasis> f, GeometryOptions opts = {}) {
    std::array<double, 3> mu{f->mu(0), f->mu(1), f->mu(2)};
    return {std::move(point), std::move(f), mu, opts};
  }

  /// Least-squares metric, mu_i = 0.
  static MetricContext least_squares(TuckerPoint point, std::shared_ptr<const FeatureBasis> f, GeometryOptions opts = {}) {
    return {std::move(point), std::move(f), {0.0, 0.0, 0.0}, opts};
  }

  const TuckerPoint& point() const { return point_; }
  const FeatureBasis& features() const { return *features_; }
  const std::shared_ptr<const FeatureBasis>& features_ptr() const { return features_; }
  const GeometryOptions& options() const { return opts_; }
  double mu(int i) const { return mu_[static_cast<std::size_t>(i)]; }
  const std::array<double, 3>& mu() const { return mu_; }
  /// True when some G_i needed a ridge to be factorized.
  bool regularized() const { return regularized_; }

  const Matrix& u(int i) const { return point_.u[idx(i)]; }
  const Matrix& g(int i) const { return g_[idx(i)]; }
  const Matrix& g_alpha(int i) const { return g_alpha_[idx(i)]; }
  const Matrix& g_unfold(int i) const { return g_unfold_[idx(i)]; }
  const Matrix& v(int i) const { return v_[idx(i)]; }
  const Matrix& w(int i) const { return w_[idx(i)]; }
  const Matrix& vtv(int i) const { return vtv_[idx(i)]; }
  const Matrix& wtw(int i) const { return wtw_[idx(i)]; }

  /// X G_i^{-1}.
  Matrix right_solve_g(int i, const Matrix& x) const { return llt_g_[idx(i)].solve(x.transpose()).transpose(); }
  /// X G_ai^{-1}.
  Matrix right_solve_g_alpha(int i, const Matrix& x) const {
    return llt_g_alpha_[idx(i)].solve(x.transpose()).transpose();
  }

  /// M_i(X) = X G_i + mu_i (I - P_i P_i^T) X.
  Matrix metric_factor(int i, const Matrix& x) const {
    Matrix out = x * g(i);
    if (mu(i) != 0.0) out += mu(i) * (x - features_->project(i, x));
    return out;
  }

  /// M_i^{-1}(X) = P_i P_i^T X G_i^{-1} + (I - P_i P_i^T) X G_ai^{-1}.
  Matrix inverse_metric_factor(int i, const Matrix& x) const {
    const Matrix px = features_->project(i, x);
    return right_solve_g(i, px) + right_solve_g_alpha(i, x - px);
  }

 private:
  static std::size_t idx(int i) {
    check_mode(i);
    return static_cast<std::size_t>(i);
  }

  TuckerPoint point_;
  std::shared_ptr<const FeatureBasis> features_;
  std::array<double, 3> mu_;
  GeometryOptions opts_;
  bool regularized_ = false;
  std::array<Matrix, 3> g_unfold_, g_, g_alpha_, v_, w_, vtv_, wtw_;
  std::array<Eigen::LLT<Matrix>, 3> llt_g_, llt_g_alpha_;
};

inline void check_anchored(const MetricContext& ctx, const AmbientVector& v) {
  if (v.core.dims() != ctx.point().core.dims()) throw DimensionError("vector core shape does not match the point");
  for (int i = 0; i < 3; ++i)
    if (v.u[static_cast<std::size_t>(i)].rows() != ctx.u(i).rows() || v.u[static_cast<std::size_t>(i)].cols() != ctx.u(i).cols())
      throw DimensionError("vector factor " + std::to_string(i + 1) + " shape does not match the point");
}

inline double metric_inner(const MetricContext& ctx, const AmbientVector& a, const AmbientVector& b) {
  check_anchored(ctx, a);
  check_anchored(ctx, b);
  double s = inner(a.core, b.core);
  for (int i = 0; i < 3; ++i) s += (a.u[static_cast<std::size_t>(i)].array() * ctx.metric_factor(i, b.u[static_cast<std::size_t>(i)]).array()).sum();
  return s;
}

inline double metric_norm_sq(const MetricContext& ctx, const AmbientVector& a) { return metric_inner(ctx, a, a); }

/// The ambient vector g with <g, zeta>_X = <egrad, zeta> for every ambient zeta.
inline AmbientVector scaled_gradient(const MetricContext& ctx, const AmbientVector& egrad) {
  check_anchored(ctx, egrad);
  AmbientVector out{egrad.core, {}};
  for (int i = 0; i < 3; ++i) out.u[static_cast<std::size_t>(i)] = ctx.inverse_metric_factor(i, egrad.u[static_cast<std::size_t>(i)]);
  return out;
}

/// Solves sym(V_i^T V_i S_i G_i^{-1} + W_i^T W_i S_i G_ai^{-1}) = rhs_i for
/// symmetric S_i, all three modes at once.
inline MatrixTriple solve_tangent_S(const MetricContext& ctx, const MatrixTriple& rhs, InnerSolveStats* stats = nullptr) {
  auto op = [&ctx](const MatrixTriple& s) {
    MatrixTriple out;
    for (int i = 0; i < 3; ++i) {
      const auto k = static_cast<std::size_t>(i);
      out[k] = sym(ctx.right_solve_g(i, ctx.vtv(i) * s[k]) + ctx.right_solve_g_alpha(i, ctx.wtw(i) * s[k]));
    }
    return out;
  };
  return solve_structured(op, rhs, MatrixStructure::symmetric, ctx.options().inner, stats);
}

/// Metric-orthogonal projection of an ambient vector onto the tangent space
/// R^{r1 x r2 x r3} x T St(r1,n1) x T St(r2,n2) x T St(r3,n3).
inline AmbientVector project_tangent(const MetricContext& ctx, const AmbientVector& z, InnerSolveStats* stats = nullptr) {
  check_anchored(ctx, z);
  MatrixTriple rhs;
  for (int i = 0; i < 3; ++i) rhs[static_cast<std::size_t>(i)] = sym(ctx.u(i).transpose() * z.u[static_cast<std::size_t>(i)]);
  const MatrixTriple s = solve_tangent_S(ctx, rhs, stats);
  AmbientVector out{z.core, {}};
  for (int i = 0; i < 3; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out.u[k] = z.u[k] - ctx.right_solve_g(i, ctx.v(i) * s[k]) - ctx.right_solve_g_alpha(i, ctx.w(i) * s[k]);
  }
  return out;
}

/// The vertical vector (-sum_i G x_i Om_i, U_1 Om_1, U_2 Om_2, U_3 Om_3).
inline AmbientVector vertical_vector(const MetricContext& ctx, const MatrixTriple& omega) {
  const TuckerPoint& p = ctx.point();
  AmbientVector out{DenseTensor3(p.core.dims()), {}};
  for (int i = 0; i < 3; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out.core -= mode_product(p.core, omega[k], i);
    out.u[k] = p.u[k] * omega[k];
  }
  return out;
}

/// The skew triple D with <D, Om>_F = <eta, vertical_vector(Om)>_X for every
/// skew Om: D_i = skw(U_i^T M_i(eta_i) - (eta_G)_(i) G_(i)^T). A tangent vector
/// is horizontal exactly when D vanishes.
inline MatrixTriple vertical_dual(const MetricContext& ctx, const AmbientVector& eta) {
  check_anchored(ctx, eta);
  MatrixTriple out;
  for (int i = 0; i < 3; ++i) {
    const auto k = static_cast<std::size_t>(i);
    Matrix m = ctx.u(i).transpose() * eta.u[k] * ctx.g(i);
    if (ctx.mu(i) != 0.0) m += ctx.mu(i) * (ctx.w(i).transpose() * eta.u[k]);
    m -= matricize(eta.core, i) * ctx.g_unfold(i).transpose();
    out[k] = skw(m);
  }
  return out;
}

/// Solves the coupled skew system vertical_dual(vertical_vector(Om)) = rhs,
/// i.e. per mode
///   skw(Om_i G_i + mu_i W_i^T W_i Om_i + sum_j (G x_j Om_j)_(i) G_(i)^T) = rhs_i,
/// where the j = i term equals Om_i G_i.
inline MatrixTriple solve_skew_system(const MetricContext& ctx, const MatrixTriple& rhs, InnerSolveStats* stats = nullptr) {
  const DenseTensor3& core = ctx.point().core;
  auto op = [&ctx, &core](const MatrixTriple& om) {
    std::array<DenseTensor3, 3> rotated;
    for (int j = 0; j < 3; ++j) rotated[static_cast<std::size_t>(j)] = mode_product(core, om[static_cast<std::size_t>(j)], j);
    MatrixTriple out;
    for (int i = 0; i < 3; ++i) {
      const auto k = static_cast<std::size_t>(i);
      Matrix m = om[k] * ctx.g(i);
      if (ctx.mu(i) != 0.0) m += ctx.mu(i) * (ctx.wtw(i) * om[k]);
      for (int j = 0; j < 3; ++j) m += matricize(rotated[static_cast<std::size_t>(j)], i) * ctx.g_unfold(i).transpose();
      out[k] = skw(m);
    }
    return out;
  };
  return solve_structured(op, rhs, MatrixStructure::skew, ctx.options().inner, stats);
}

/// Metric-orthogonal projection of a tangent vector onto the horizontal space,
/// removing its vertical component: (eta_G + sum_i G x_i Om_i, eta_i - U_i Om_i).
inline AmbientVector project_horizontal(const MetricContext& ctx, const AmbientVector& eta, InnerSolveStats* stats = nullptr) {
  const MatrixTriple omega = solve_skew_system(ctx, vertical_dual(ctx, eta), stats);
  return eta - vertical_vector(ctx, omega);
}

/// ||sym(U_i^T v_i)|| summed over modes, relative to ||v||.
inline double tangent_violation(const MetricContext& ctx, const AmbientVector& v) {
  check_anchored(ctx, v);
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 3; ++i) {
    const auto k = static_cast<std::size_t>(i);
    num += sym(ctx.u(i).transpose() * v.u[k]).norm();
    den += v.u[k].norm();
  }
  return den > 0 ? num / den : 0.0;
}

/// ||vertical_dual(v)|| relative to the size of the terms it is built from.
inline double horizontal_violation(const MetricContext& ctx, const AmbientVector& v) {
  const MatrixTriple d = vertical_dual(ctx, v);
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 3; ++i) {
    const auto k = static_cast<std::size_t>(i);
    num += d[k].norm();
    den += (ctx.u(i).transpose() * ctx.metric_factor(i, v.u[k])).norm() +
           (matricize(v.core, i) * ctx.g_unfold(i).transpose()).norm();
  }
  return den > 0 ? num / den : 0.0;
}

inline bool is_tangent(const MetricContext& ctx, const AmbientVector& v) {
  return tangent_violation(ctx, v) <= ctx.options().flag_tol;
}

inline bool is_horizontal(const MetricContext& ctx, const AmbientVector& v) {
  return is_tangent(ctx, v) && horizontal_violation(ctx, v) <= ctx.options().flag_tol;
}

/// (G + t eta_G, uf(U_i + t eta_i)). Throws RankDeficiencyError when some
/// U_i + t eta_i loses column rank.
inline TuckerPoint retract(const TuckerPoint& p, const AmbientVector& eta, double t) {
  TuckerPoint q{p.core + t * eta.core, {}};
  for (std::size_t i = 0; i < 3; ++i) {
    if (eta.u[i].rows() != p.u[i].rows() || eta.u[i].cols() != p.u[i].cols())
      throw DimensionError("retract: direction shape does not match the point");
    q.u[i] = uf(p.u[i] + t * eta.u[i]);
  }
  return q;
}

/// Carries a previous search direction to the point of new_ctx: tangent
/// projection followed by horizontal projection.
inline AmbientVector transport(const MetricContext& new_ctx, const AmbientVector& prev) {
  return project_horizontal(new_ctx, project_tangent(new_ctx, prev));
}

}  // namespace tcsi
