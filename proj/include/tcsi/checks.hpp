#pragma once

// Self-checks of the geometry and the gradient on random small instances:
// finite differences, projector identities, class invariance, retraction
// order and the chordal-distance identity of the regularizer.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "tcsi/solver.hpp"
#include "tcsi/synth.hpp"

namespace tcsi {

struct CheckResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass() const { return std::isfinite(value) && value <= threshold; }
};

struct CheckOptions {
  Index max_dim = 12;
  Index max_rank = 4;
  Index max_features = 8;
  int trials = 10;
  int directions = 20;
  int probes = 50;
  std::uint64_t seed = 1;
  /// Test hook: the scaled gradient is computed under a perturbed metric, so
  /// the adjoint identity (and with it the Riemannian gradient) must fail.
  bool corrupt_metric = false;
};

struct RandomInstance {
  ProblemData data;
  TuckerPoint point;
};

template <class Rng>
RandomInstance random_instance(Rng& rng, const CheckOptions& opts) {
  std::uniform_int_distribution<Index> rank_dist(1, std::max<Index>(1, opts.max_rank));
  std::uniform_real_distribution<double> alpha_dist(0.0, 1.0);
  RandomInstance inst;
  Dims3 dims{};
  std::array<Matrix, 3> raw;
  auto& rk = inst.data.rank.r;
  do {
    for (auto& r : rk) r = rank_dist(rng);
  } while (rk[0] > rk[1] * rk[2] || rk[1] > rk[0] * rk[2] || rk[2] > rk[0] * rk[1]);
  for (std::size_t i = 0; i < 3; ++i) {
    const Index r = inst.data.rank.r[i];
    std::uniform_int_distribution<Index> k_dist(r, std::max(r, opts.max_features));
    const Index k = k_dist(rng);
    std::uniform_int_distribution<Index> n_dist(k + 1, std::max(k + 1, opts.max_dim));
    dims[i] = n_dist(rng);
    raw[i] = gaussian_matrix(dims[i], k, rng);
  }
  const auto total = static_cast<std::size_t>(tensor_size(dims));
  const std::size_t m = std::min(total, static_cast<std::size_t>(3.0 * manifold_dimension(dims, inst.data.rank)));
  const std::vector<Index3> idx = sample_indices(dims, m, rng);
  std::normal_distribution<double> nd;
  std::vector<SparseTensor3::Entry> e;
  for (const Index3& ix : idx) e.push_back({ix, nd(rng)});
  inst.data.train = SparseTensor3(dims, std::move(e));
  inst.data.features = std::make_shared<const FeatureBasis>(
      FeatureBasis::from_raw(raw, {alpha_dist(rng), alpha_dist(rng), alpha_dist(rng)}, dims, m, inst.data.rank));
  for (std::size_t i = 0; i < 3; ++i) inst.point.u[i] = uf(gaussian_matrix(dims[i], inst.data.rank.r[i], rng));
  inst.point.core = gaussian_tensor(inst.data.rank.r, rng);
  return inst;
}

template <class Rng>
AmbientVector random_ambient(const TuckerPoint& p, Rng& rng) {
  AmbientVector v{gaussian_tensor(p.core.dims(), rng), {}};
  for (std::size_t i = 0; i < 3; ++i) v.u[i] = gaussian_matrix(p.u[i].rows(), p.u[i].cols(), rng);
  return v;
}

template <class Rng>
std::array<Matrix, 3> random_rotations(const TuckerPoint& p, Rng& rng) {
  std::array<Matrix, 3> o;
  for (std::size_t i = 0; i < 3; ++i) o[i] = random_orthogonal(p.u[i].cols(), rng);
  return o;
}

inline double relative_gap(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

inline double ambient_relative_gap(const AmbientVector& a, const AmbientVector& b) {
  return euclid_norm(a - b) / std::max({euclid_norm(a), euclid_norm(b), 1e-300});
}

inline std::vector<CheckResult> run_checks(const CheckOptions& opts) {
  if (opts.trials < 1) throw DimensionError("checks need at least one trial");
  if (opts.directions < 1 || opts.probes < 1) throw DimensionError("checks need at least one direction");
  std::mt19937_64 rng(opts.seed);
  CheckResult fd_e{"fd_euclid_gradient", 0.0, 1e-5};
  CheckResult fd_r{"fd_riemannian_gradient", 0.0, 1e-5};
  CheckResult adjoint{"scaled_gradient_adjoint", 0.0, 1e-8};
  CheckResult tan_idem{"tangent_idempotence", 0.0, 1e-10};
  CheckResult tan_flag{"tangent_flag", 0.0, 1e-8};
  CheckResult tan_orth{"tangent_residual_orthogonality", 0.0, 1e-10};
  CheckResult hor_idem{"horizontal_idempotence", 0.0, 1e-10};
  CheckResult hor_flag{"horizontal_flag", 0.0, 1e-8};
  CheckResult hor_orth{"horizontal_residual_orthogonality", 0.0, 1e-10};
  CheckResult inv_metric{"metric_invariance", 0.0, 1e-10};
  CheckResult inv_cost{"cost_invariance", 0.0, 1e-10};
  CheckResult inv_retr{"retraction_invariance", 0.0, 1e-10};
  CheckResult taylor{"retraction_taylor_ratio", 1.0, 2.0};
  CheckResult prop2{"regularizer_chordal_identity", 0.0, 1e-10};

  for (int trial = 0; trial < opts.trials; ++trial) {
    const RandomInstance inst = random_instance(rng, opts);
    const TuckerPoint& p = inst.point;
    const ProblemData& data = inst.data;
    const MetricContext ctx = MetricContext::preconditioned(p, data.features);
    std::array<double, 3> bad_mu = ctx.mu();
    for (double& m : bad_mu) m = 2.0 * m + 1.0;
    const MetricContext bad_ctx(p, data.features, bad_mu);
    const MetricContext& scale_ctx = opts.corrupt_metric ? bad_ctx : ctx;

    const AmbientVector eg = euclid_grad(p, data);
    const AmbientVector rg = project_tangent(ctx, scaled_gradient(scale_ctx, eg));
    const double h = 1e-6;
    for (int d = 0; d < opts.directions; ++d) {
      const AmbientVector z = random_ambient(p, rng);
      auto along = [&](double t) {
        TuckerPoint q{p.core + t * z.core, {}};
        for (std::size_t i = 0; i < 3; ++i) q.u[i] = p.u[i] + t * z.u[i];
        return cost(q, data).total;
      };
      fd_e.value = std::max(fd_e.value, relative_gap((along(h) - along(-h)) / (2 * h), euclid_inner(eg, z)));

      const AmbientVector eta = project_tangent(ctx, z);
      auto on_manifold = [&](double t) { return cost(retract(p, eta, t), data).total; };
      fd_r.value = std::max(fd_r.value, relative_gap((on_manifold(h) - on_manifold(-h)) / (2 * h), metric_inner(ctx, rg, eta)));
      adjoint.value = std::max(adjoint.value, relative_gap(metric_inner(ctx, scaled_gradient(scale_ctx, eg), z), euclid_inner(eg, z)));
    }

    const AmbientVector z = random_ambient(p, rng);
    const AmbientVector t1 = project_tangent(ctx, z);
    tan_idem.value = std::max(tan_idem.value, ambient_relative_gap(project_tangent(ctx, t1), t1));
    tan_flag.value = std::max(tan_flag.value, tangent_violation(ctx, t1));
    const AmbientVector h1 = project_horizontal(ctx, t1);
    hor_idem.value = std::max(hor_idem.value, ambient_relative_gap(project_horizontal(ctx, h1), h1));
    hor_flag.value = std::max(hor_flag.value, std::max(tangent_violation(ctx, h1), horizontal_violation(ctx, h1)));
    const AmbientVector tan_res = z - t1;
    const AmbientVector hor_res = t1 - h1;
    for (int d = 0; d < opts.probes; ++d) {
      const AmbientVector probe_t = project_tangent(ctx, random_ambient(p, rng));
      tan_orth.value = std::max(tan_orth.value, std::abs(metric_inner(ctx, tan_res, probe_t)) /
                                                    std::sqrt(metric_norm_sq(ctx, tan_res) * metric_norm_sq(ctx, probe_t)));
      const AmbientVector probe_h = project_horizontal(ctx, probe_t);
      hor_orth.value = std::max(hor_orth.value, std::abs(metric_inner(ctx, hor_res, probe_h)) /
                                                    std::sqrt(metric_norm_sq(ctx, hor_res) * metric_norm_sq(ctx, probe_h)));
    }

    const std::array<Matrix, 3> o = random_rotations(p, rng);
    const TuckerPoint po = rotate(p, o);
    const MetricContext ctx_o = MetricContext::preconditioned(po, data.features);
    const AmbientVector a = random_ambient(p, rng), b = random_ambient(p, rng);
    inv_metric.value = std::max(inv_metric.value, relative_gap(metric_inner(ctx, a, b), metric_inner(ctx_o, rotate(a, o), rotate(b, o))));
    inv_cost.value = std::max(inv_cost.value, relative_gap(cost(p, data).total, cost(po, data).total));
    const TuckerPoint r1 = rotate(retract(p, h1, 0.1), o);
    const TuckerPoint r2 = retract(po, rotate(h1, o), 0.1);
    double gap = frob_norm(r1.core - r2.core) / frob_norm(r1.core);
    for (std::size_t i = 0; i < 3; ++i) gap = std::max(gap, (r1.u[i] - r2.u[i]).norm() / r1.u[i].norm());
    inv_retr.value = std::max(inv_retr.value, gap);

    const DenseTensor3 x0 = p.full();
    const AmbientVector dir = (1.0 / euclid_norm(h1)) * h1;
    const DenseTensor3 d0 = tangent_to_full(p, dir);
    std::vector<double> ratios;
    for (double t : {1e-2, 1e-3, 1e-4}) {
      DenseTensor3 rem = retract(p, dir, t).full();
      rem -= x0;
      rem -= t * d0;
      ratios.push_back(frob_norm(rem) / (t * t));
    }
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    taylor.value = std::max(taylor.value, *lo > 0 ? *hi / *lo : std::numeric_limits<double>::infinity());

    const CostParts parts = cost(p, data);
    for (int i = 0; i < 3; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const double chordal = chordal_distance_sq(p.u[k], data.features->p[k]);
      const double expected = 0.5 * data.features->nu(i) * (chordal - static_cast<double>(data.features->k(i) - p.u[k].cols()));
      prop2.value = std::max(prop2.value, relative_gap(parts.reg_terms[k], expected));
    }
  }
  return {fd_e, fd_r, adjoint, tan_idem, tan_flag, tan_orth, hor_idem, hor_flag, hor_orth, inv_metric, inv_cost, inv_retr, taylor, prop2};
}

}  // namespace tcsi
