#pragma once

// Riemannian conjugate gradients on the Tucker quotient manifold.

#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tcsi/objective.hpp"

namespace tcsi {

enum class MetricMode { preconditioned_side_info, least_squares };
enum class InitMode { random, hosvd };
enum class Termination { grad_tol, max_iters, nrmse_target, line_search_failure };
enum class BetaRule { fletcher_reeves, polak_ribiere_plus, hybrid };

inline std::string to_string(MetricMode m) { return m == MetricMode::least_squares ? "least_squares" : "preconditioned_side_info"; }
inline std::string to_string(InitMode m) { return m == InitMode::hosvd ? "hosvd" : "random"; }
inline std::string to_string(BetaRule b) {
  switch (b) {
    case BetaRule::fletcher_reeves: return "fr";
    case BetaRule::polak_ribiere_plus: return "pr";
    default: return "hybrid";
  }
}
inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::grad_tol: return "grad_tol";
    case Termination::max_iters: return "max_iters";
    case Termination::nrmse_target: return "nrmse_target";
    default: return "line_search_failure";
  }
}

struct LineSearchOptions {
  double armijo_c = 1e-4;
  double backtrack = 0.5;
  int max_trials = 30;
};

struct SolverConfig {
  int max_iters = 300;
  /// Stop once <xi, xi> (squared Riemannian gradient norm) falls to this value.
  double grad_tol = 1e-8;
  /// Stop once the training NRMSE falls to this value (off when empty).
  std::optional<double> nrmse_target;
  MetricMode metric_mode = MetricMode::preconditioned_side_info;
  LineSearchOptions line_search;
  std::uint64_t seed = 0;
  InitMode init_mode = InitMode::random;
  BetaRule beta_rule = BetaRule::hybrid;
  GeometryOptions geometry;
#ifdef NDEBUG
  bool check_flags = false;
#else
  bool check_flags = true;
#endif

  void validate() const {
    if (max_iters < 1) throw DimensionError("max_iters must be >= 1");
    if (!(grad_tol > 0.0)) throw DimensionError("grad_tol must be > 0");
    if (nrmse_target && !(*nrmse_target > 0.0)) throw DimensionError("nrmse target must be > 0");
    if (!(line_search.armijo_c > 0.0 && line_search.armijo_c < 1.0)) throw DimensionError("Armijo constant must lie in (0, 1)");
    if (!(line_search.backtrack > 0.0 && line_search.backtrack < 1.0)) throw DimensionError("backtrack factor must lie in (0, 1)");
    if (line_search.max_trials < 1) throw DimensionError("line search needs at least one trial");
    if (!(geometry.flag_tol > 0.0) || !(geometry.inner.rel_tol > 0.0) || geometry.inner.max_iters < 1)
      throw DimensionError("geometry tolerances must be > 0");
  }
};

struct IterTrace {
  int iter = 0;
  double seconds = 0.0;
  double cost = 0.0;
  double grad_norm_sq = 0.0;
  double step = 0.0;
  double beta = 0.0;
  double train_rmse = 0.0;
  std::optional<double> test_rmse;
};

using TraceSink = std::function<void(const IterTrace&)>;

struct SolveResult {
  TuckerPoint point;
  std::vector<IterTrace> trace;
  Termination reason = Termination::max_iters;
  /// Some core unfolding Gram matrix needed a ridge at least once.
  bool regularized = false;
  int restarts = 0;
};

inline MetricContext make_context(TuckerPoint p, std::shared_ptr<const FeatureBasis> f, MetricMode mode,
                                  const GeometryOptions& opts = {}) {
  return mode == MetricMode::least_squares ? MetricContext::least_squares(std::move(p), std::move(f), opts)
                                           : MetricContext::preconditioned(std::move(p), std::move(f), opts);
}

/// Fletcher-Reeves ratio <xi_new, xi_new>_new / <xi_old, xi_old>_old, clamped at 0.
inline double beta_fr_plus(const MetricContext& ctx_new, const AmbientVector& xi_new, const MetricContext& ctx_old,
                           const AmbientVector& xi_old) {
  const double den = metric_norm_sq(ctx_old, xi_old);
  if (!(den > 0.0)) return 0.0;
  const double b = metric_norm_sq(ctx_new, xi_new) / den;
  return std::isfinite(b) ? std::max(b, 0.0) : 0.0;
}

/// Polak-Ribiere ratio <xi_new, xi_new - xi_old_moved>_new / <xi_old, xi_old>_old,
/// clamped at 0; xi_old_moved is the old gradient transported to the new point.
inline double beta_pr_plus(const MetricContext& ctx_new, const AmbientVector& xi_new, const AmbientVector& xi_old_moved,
                           const MetricContext& ctx_old, const AmbientVector& xi_old) {
  const double den = metric_norm_sq(ctx_old, xi_old);
  if (!(den > 0.0)) return 0.0;
  const double b = (metric_norm_sq(ctx_new, xi_new) - metric_inner(ctx_new, xi_new, xi_old_moved)) / den;
  return std::isfinite(b) ? std::max(b, 0.0) : 0.0;
}

struct Direction {
  AmbientVector eta;
  double beta = 0.0;
  bool restarted = false;
};

/// eta = -xi + beta * transported, falling back to -xi when that is not a
/// descent direction.
inline Direction compose_direction(const MetricContext& ctx, const AmbientVector& xi, const AmbientVector* transported,
                                   double beta) {
  if (transported && beta > 0.0) {
    AmbientVector eta = beta * *transported;
    eta -= xi;
    if (metric_inner(ctx, eta, xi) < 0.0) return {std::move(eta), beta, false};
    return {-xi, 0.0, true};
  }
  return {-xi, 0.0, false};
}

/// Entries of Dpi(p)[v] = v_G x_i U_i + sum_i G x_i v_i x_{j != i} U_j at the given indices.
inline std::vector<double> differential_at(const TuckerPoint& p, const AmbientVector& v, std::span<const Index3> idx) {
  std::vector<double> d = tucker_entries_at(v.core, p.u[0], p.u[1], p.u[2], idx);
  const std::vector<double> d1 = tucker_entries_at(p.core, v.u[0], p.u[1], p.u[2], idx);
  const std::vector<double> d2 = tucker_entries_at(p.core, p.u[0], v.u[1], p.u[2], idx);
  const std::vector<double> d3 = tucker_entries_at(p.core, p.u[0], p.u[1], v.u[2], idx);
  for (std::size_t n = 0; n < d.size(); ++n) d[n] += d1[n] + d2[n] + d3[n];
  return d;
}

/// Minimizer of the cost along the linearized move t -> x + t Dpi[eta]:
///   t0 = -(<P(D), S> + sum_i nu_i <W_i, eta_i>) / (||P(D)||^2 + sum_i nu_i ||(I - P_i P_i^T) eta_i||^2),
/// with S the current residual. Without regularization this is
/// <P(D), P(R - X)> / ||P(D)||^2.
inline double linearized_step(const TuckerPoint& p, const ProblemData& data, const SparseTensor3& residual,
                              const AmbientVector& eta) {
  const std::vector<double> d = differential_at(p, eta, data.train.indices());
  double num = 0.0, den = 0.0;
  for (std::size_t n = 0; n < d.size(); ++n) {
    num -= d[n] * residual.values()[n];
    den += d[n] * d[n];
  }
  for (int i = 0; i < 3; ++i) {
    const double nu = data.features->nu(i);
    if (nu == 0.0) continue;
    const auto k = static_cast<std::size_t>(i);
    const Matrix w = p.u[k] - data.features->project(i, p.u[k]);
    const Matrix we = eta.u[k] - data.features->project(i, eta.u[k]);
    num -= nu * (w.array() * eta.u[k].array()).sum();
    den += nu * we.squaredNorm();
  }
  return den > 0.0 ? num / den : 0.0;
}

struct LineSearchResult {
  bool accepted = false;
  double t = 0.0;
  double t0 = 0.0;
  int trials = 0;
  TuckerPoint point;
  SparseTensor3 residual;
  CostParts cost;
};

/// Armijo backtracking from the linearized step: accepts the first t with
/// f(R_x(t eta)) <= f(x) + c t <xi, eta>_x.
inline LineSearchResult line_search(const TuckerPoint& p, const ProblemData& data, const MetricContext& ctx,
                                    const AmbientVector& eta, const AmbientVector& xi, double f0,
                                    const SparseTensor3& residual, const LineSearchOptions& opts = {},
                                    std::optional<double> t_initial = std::nullopt) {
  LineSearchResult out;
  const double slope = metric_inner(ctx, xi, eta);
  if (!(slope < 0.0)) return out;
  double t = t_initial ? *t_initial : linearized_step(p, data, residual, eta);
  if (!(t > 0.0) || !std::isfinite(t)) t = 1.0;
  out.t0 = t;
  for (int trial = 0; trial < opts.max_trials; ++trial, t *= opts.backtrack) {
    out.trials = trial + 1;
    TuckerPoint q;
    try {
      q = retract(p, eta, t);
    } catch (const RankDeficiencyError&) {
      continue;
    }
    SparseTensor3 res = sparse_residual(q, data.train);
    const CostParts c = cost_from_residual(q, data, res);
    if (std::isfinite(c.total) && c.total <= f0 + opts.armijo_c * t * slope) {
      out.accepted = true;
      out.t = t;
      out.point = std::move(q);
      out.residual = std::move(res);
      out.cost = c;
      return out;
    }
  }
  return out;
}

/// Eigenvectors of the r largest eigenvalues of a symmetric matrix, each
/// signed so that its largest-magnitude entry is positive.
inline Matrix leading_eigenvectors(const Matrix& sym_mat, Index r) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym_mat);
  if (es.info() != Eigen::Success) throw SolveError("eigendecomposition failed", 0.0);
  const Index n = sym_mat.rows();
  Matrix u(n, r);
  for (Index j = 0; j < r; ++j) {
    Vector v = es.eigenvectors().col(n - 1 - j);
    Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    u.col(j) = v;
  }
  return u;
}

inline TuckerPoint init_point(const ProblemData& data, InitMode mode, std::uint64_t seed) {
  const Dims3& dims = data.dims();
  data.rank.validate(dims);
  TuckerPoint p;
  if (mode == InitMode::random) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < 3; ++i) p.u[i] = uf(gaussian_matrix(dims[i], data.rank.r[i], rng));
    p.core = gaussian_tensor(data.rank.r, rng);
    return p;
  }
  for (int i = 0; i < 3; ++i)
    p.u[static_cast<std::size_t>(i)] = leading_eigenvectors(sparse_unfolding_gram(data.train, i), data.rank[i]);
  p.core = sparse_multi_ttm_t(data.train, p.u);
  return p;
}

inline TuckerPoint init_point(const ProblemData& data, const SolverConfig& config) {
  return init_point(data, config.init_mode, config.seed);
}

inline double train_rmse_from_residual(const SparseTensor3& residual) {
  double ss = 0.0;
  for (double v : residual.values()) ss += v * v;
  return std::sqrt(ss / static_cast<double>(residual.nnz()));
}

/// Riemannian CG: xi = riem_grad, eta = -xi + beta * transport(eta_prev),
/// Armijo step along eta, retraction.
inline SolveResult solve_rcg(const ProblemData& data, const SolverConfig& config,
                             const std::optional<TuckerPoint>& init = std::nullopt, const TraceSink& sink = {}) {
  data.validate();
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&start] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  SolveResult result;
  TuckerPoint p = init ? *init : init_point(data, config);
  check_point(p, data);
  if (p.rank() != data.rank) throw DimensionError("initial point rank does not match the problem rank");
  if (p.orthonormality_error() > 1e-10) throw DimensionError("initial factors are not orthonormal");

  const double range = [&] {
    const auto [lo, hi] = std::minmax_element(data.train.values().begin(), data.train.values().end());
    return *hi - *lo;
  }();

  SparseTensor3 residual = sparse_residual(p, data.train);
  CostParts c = cost_from_residual(p, data, residual);
  auto ctx = std::make_unique<MetricContext>(make_context(p, data.features, config.metric_mode, config.geometry));
  AmbientVector xi = riem_grad_from_euclid(*ctx, euclid_grad_from_residual(p, data, residual));
  double gns = metric_norm_sq(*ctx, xi);
  result.regularized = ctx->regularized();

  auto record = [&](int iter, double step, double beta) {
    IterTrace t;
    t.iter = iter;
    t.seconds = elapsed();
    t.cost = c.total;
    t.grad_norm_sq = gns;
    t.step = step;
    t.beta = beta;
    t.train_rmse = train_rmse_from_residual(residual);
    if (data.test) t.test_rmse = rmse(p, *data.test);
    result.trace.push_back(t);
    if (sink) sink(t);
    return t.train_rmse;
  };
  double train_rmse = record(0, 0.0, 0.0);

  std::optional<AmbientVector> eta_prev;
  std::unique_ptr<MetricContext> ctx_prev;
  std::optional<AmbientVector> xi_prev;
  for (int k = 0;; ++k) {
    if (gns <= config.grad_tol) {
      result.reason = Termination::grad_tol;
      break;
    }
    if (config.nrmse_target && (range > 0 ? train_rmse / range : train_rmse) <= *config.nrmse_target) {
      result.reason = Termination::nrmse_target;
      break;
    }
    if (k >= config.max_iters) {
      result.reason = Termination::max_iters;
      break;
    }

    Direction dir{-xi, 0.0, false};
    if (eta_prev) {
      const AmbientVector moved = transport(*ctx, *eta_prev);
      double beta = beta_fr_plus(*ctx, xi, *ctx_prev, *xi_prev);
      if (config.beta_rule != BetaRule::fletcher_reeves) {
        const double pr = beta_pr_plus(*ctx, xi, transport(*ctx, *xi_prev), *ctx_prev, *xi_prev);
        beta = config.beta_rule == BetaRule::polak_ribiere_plus ? pr : std::min(pr, beta);
      }
      dir = compose_direction(*ctx, xi, &moved, beta);
      if (dir.restarted) ++result.restarts;
    }
    if (config.check_flags && !is_horizontal(*ctx, dir.eta))
      throw SolveError("search direction left the horizontal space", horizontal_violation(*ctx, dir.eta));

    LineSearchResult ls = line_search(p, data, *ctx, dir.eta, xi, c.total, residual, config.line_search);
    if (!ls.accepted && dir.beta != 0.0) {
      dir = {-xi, 0.0, true};
      ++result.restarts;
      ls = line_search(p, data, *ctx, dir.eta, xi, c.total, residual, config.line_search);
    }
    if (!ls.accepted) {
      result.reason = Termination::line_search_failure;
      break;
    }

    p = std::move(ls.point);
    residual = std::move(ls.residual);
    c = ls.cost;
    ctx_prev = std::move(ctx);
    xi_prev = std::move(xi);
    eta_prev = std::move(dir.eta);
    ctx = std::make_unique<MetricContext>(make_context(p, data.features, config.metric_mode, config.geometry));
    result.regularized = result.regularized || ctx->regularized();
    xi = riem_grad_from_euclid(*ctx, euclid_grad_from_residual(p, data, residual));
    gns = metric_norm_sq(*ctx, xi);
    train_rmse = record(k + 1, ls.t, dir.beta);
  }
  result.point = std::move(p);
  return result;
}

}  // namespace tcsi
