#pragma once

// Synthetic completion instances: a Gaussian low-rank tensor R = A x_i B_i,
// noisy and padded feature matrices, uniformly sampled observations and a
// held-out evaluation set.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "tcsi/objective.hpp"

namespace tcsi {

/// R = A x_1 B_1 x_2 B_2 x_3 B_3 with Gaussian A and B_i.
struct LowRankTruth {
  DenseTensor3 core;
  std::array<Matrix, 3> b;

  Dims3 dims() const { return {b[0].rows(), b[1].rows(), b[2].rows()}; }
  std::vector<double> entries_at(std::span<const Index3> idx) const { return tucker_entries_at(core, b[0], b[1], b[2], idx); }
  DenseTensor3 full() const { return tucker_to_full(core, b); }

  /// The same tensor as a TuckerPoint with orthonormal factors.
  TuckerPoint as_point() const {
    TuckerPoint p{core, {}};
    for (int i = 0; i < 3; ++i) {
      const auto k = static_cast<std::size_t>(i);
      Eigen::HouseholderQR<Matrix> qr(b[k]);
      const Index r = b[k].cols();
      p.u[k] = qr.householderQ() * Matrix::Identity(b[k].rows(), r);
      const Matrix rr = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
      p.core = mode_product(p.core, rr, i);
    }
    return p;
  }
};

template <class Rng>
LowRankTruth gen_lowrank(const Dims3& dims, const MultiLinearRank& rank, Rng& rng) {
  rank.validate(dims);
  LowRankTruth t;
  t.core = gaussian_tensor(rank.r, rng);
  for (std::size_t i = 0; i < 3; ++i) t.b[i] = gaussian_matrix(dims[i], rank.r[i], rng);
  return t;
}

inline LowRankTruth gen_lowrank(const Dims3& dims, const MultiLinearRank& rank, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return gen_lowrank(dims, rank, rng);
}

/// F = [B, G_extra] + s ||B||_F E with Gaussian G_extra (n x k_extra) and E.
template <class Rng>
Matrix gen_features(const Matrix& b, double s, Index k_extra, Rng& rng) {
  if (!(s >= 0.0)) throw DimensionError("feature noise scale must be >= 0");
  if (k_extra < 0) throw DimensionError("extra feature count must be >= 0");
  Matrix f(b.rows(), b.cols() + k_extra);
  f.leftCols(b.cols()) = b;
  if (k_extra > 0) f.rightCols(k_extra) = gaussian_matrix(b.rows(), k_extra, rng);
  if (s > 0.0) f += (s * b.norm()) * gaussian_matrix(f.rows(), f.cols(), rng);
  return f;
}

inline Matrix gen_features(const Matrix& b, double s, Index k_extra, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return gen_features(b, s, k_extra, rng);
}

/// Dimension of the manifold of n1 x n2 x n3 tensors of multilinear rank r:
/// sum_i (n_i r_i - r_i^2) + r1 r2 r3.
inline double manifold_dimension(const Dims3& dims, const MultiLinearRank& rank) {
  double d = static_cast<double>(rank.product());
  for (std::size_t i = 0; i < 3; ++i)
    d += static_cast<double>(dims[i]) * static_cast<double>(rank.r[i]) - static_cast<double>(rank.r[i] * rank.r[i]);
  return d;
}

inline double tensor_size(const Dims3& dims) {
  return static_cast<double>(dims[0]) * static_cast<double>(dims[1]) * static_cast<double>(dims[2]);
}

/// |Omega| = round(OS * D).
inline std::size_t sample_count(const Dims3& dims, const MultiLinearRank& rank, double os) {
  if (!(os > 0.0) || !std::isfinite(os)) throw DimensionError("oversampling ratio must be > 0");
  const double m = std::round(os * manifold_dimension(dims, rank));
  if (m > tensor_size(dims))
    throw DimensionError("oversampling " + std::to_string(os) + " asks for " + std::to_string(static_cast<long long>(m)) +
                         " entries of a tensor with " + std::to_string(static_cast<long long>(tensor_size(dims))));
  if (m < 1) throw DimensionError("oversampling ratio yields an empty sample");
  return static_cast<std::size_t>(m);
}

inline Index3 unlinearize(const Dims3& dims, std::uint64_t lin) {
  const auto n1 = static_cast<std::uint64_t>(dims[0]), n2 = static_cast<std::uint64_t>(dims[1]);
  return {static_cast<Index>(lin % n1), static_cast<Index>((lin / n1) % n2), static_cast<Index>(lin / (n1 * n2))};
}

inline std::uint64_t linearize(const Dims3& dims, const Index3& ix) {
  const auto n1 = static_cast<std::uint64_t>(dims[0]), n2 = static_cast<std::uint64_t>(dims[1]);
  return static_cast<std::uint64_t>(ix[0]) + n1 * (static_cast<std::uint64_t>(ix[1]) + n2 * static_cast<std::uint64_t>(ix[2]));
}

/// `count` distinct values drawn uniformly from [0, n), sorted (Floyd's algorithm).
template <class Rng>
std::vector<std::uint64_t> sample_without_replacement(std::uint64_t n, std::size_t count, Rng& rng) {
  if (count > n) throw DimensionError("cannot draw more distinct values than the population holds");
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(count * 2);
  for (std::uint64_t j = n - count; j < n; ++j) {
    std::uniform_int_distribution<std::uint64_t> dist(0, j);
    const std::uint64_t t = dist(rng);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  std::vector<std::uint64_t> out(chosen.begin(), chosen.end());
  std::sort(out.begin(), out.end());
  return out;
}

/// `count` index triples uniform without replacement over the entries not in
/// `exclude`, returned in lexicographic order.
template <class Rng>
std::vector<Index3> sample_indices(const Dims3& dims, std::size_t count, Rng& rng, const std::vector<Index3>& exclude = {}) {
  const auto total = static_cast<std::uint64_t>(tensor_size(dims));
  std::vector<std::uint64_t> excl;
  excl.reserve(exclude.size());
  for (const Index3& ix : exclude) excl.push_back(linearize(dims, ix));
  std::sort(excl.begin(), excl.end());
  excl.erase(std::unique(excl.begin(), excl.end()), excl.end());
  const std::vector<std::uint64_t> ranks = sample_without_replacement(total - excl.size(), count, rng);
  // The j-th (0-based) entry of the complement is j plus the number of excluded values at or before it.
  std::vector<Index3> out;
  out.reserve(count);
  std::size_t e = 0;
  for (std::uint64_t j : ranks) {
    while (e < excl.size() && excl[e] <= j + e) ++e;
    out.push_back(unlinearize(dims, j + e));
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<Index3> sample_omega(const Dims3& dims, const MultiLinearRank& rank, double os, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_indices(dims, sample_count(dims, rank, os), rng);
}

/// values + eps * standard Gaussian.
template <class Rng>
std::vector<double> add_obs_noise(std::vector<double> values, double eps, Rng& rng) {
  if (!(eps >= 0.0)) throw DimensionError("observation noise must be >= 0");
  if (eps == 0.0) return values;
  std::normal_distribution<double> nd;
  for (double& v : values) v += eps * nd(rng);
  return values;
}

inline std::vector<double> add_obs_noise(std::vector<double> values, double eps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return add_obs_noise(std::move(values), eps, rng);
}

/// One synthetic experiment. alpha_per_obs means alpha_i = alpha / |Omega|.
struct ScenarioSpec {
  int case_id = 1;
  Dims3 dims{60, 60, 60};
  MultiLinearRank rank{{5, 5, 5}};
  double os = 1.0;
  double feature_noise = 1e-5;
  /// Extra irrelevant feature columns per mode, as a multiple of r_i.
  double extra_multiple = 0.0;
  /// Fixed number of extra columns per mode; overrides extra_multiple.
  std::optional<Index> extra_count;
  double obs_noise = 0.0;
  double alpha = 1.0;
  bool alpha_per_obs = false;
  /// Evaluation set size as a multiple of |Omega| (clamped to the unobserved entries).
  double eval_multiple = 10.0;
  std::uint64_t seed = 1;

  Index extra_columns(int i) const {
    if (extra_count) return *extra_count;
    return static_cast<Index>(std::llround(extra_multiple * static_cast<double>(rank[i])));
  }

  void validate() const {
    if (case_id < 1 || case_id > 4) throw DimensionError("scenario case must be 1, 2, 3 or 4");
    rank.validate(dims);
    if (extra_count && *extra_count < 0) throw DimensionError("extra column count must be >= 0");
    if (!(feature_noise >= 0.0) || !(obs_noise >= 0.0) || !(extra_multiple >= 0.0) || !(alpha >= 0.0) || !(eval_multiple >= 0.0))
      throw DimensionError("scenario noise levels, column multiple, alpha and eval multiple must be >= 0");
    for (int i = 0; i < 3; ++i)
      if (rank[i] + extra_columns(i) > dims[static_cast<std::size_t>(i)])
        throw DimensionError("mode " + std::to_string(i + 1) + ": " + std::to_string(rank[i] + extra_columns(i)) +
                             " feature columns exceed dimension " + std::to_string(dims[static_cast<std::size_t>(i)]));
    sample_count(dims, rank, os);
  }
};

/// The preset of each case at desk scale; the varied parameter takes its
/// middle grid value (see case_grid).
inline ScenarioSpec scenario_preset(int case_id) {
  ScenarioSpec s;
  s.case_id = case_id;
  switch (case_id) {
    case 1:
      s.os = 1.0;
      s.feature_noise = 1e-5;
      s.alpha = 10.0;
      s.alpha_per_obs = true;
      break;
    case 2:
      s.feature_noise = 1e-3;
      s.alpha = 1.0;
      break;
    case 3:
      s.feature_noise = 1e-5;
      s.extra_multiple = 10.0;
      s.alpha = 0.5;
      break;
    case 4:
      s.feature_noise = 1e-4;
      s.obs_noise = 1e-3;
      s.alpha = 5.0;
      break;
    default: throw DimensionError("scenario case must be 1, 2, 3 or 4");
  }
  return s;
}

/// The values swept by each case: OS (1), feature noise (2), extra-column
/// multiple (3), observation noise (4).
inline std::vector<double> case_grid(int case_id) {
  switch (case_id) {
    case 1: return {0.1, 1.0, 5.0};
    case 2: return {1e-4, 1e-3, 1e-2};
    case 3: return {10.0, 30.0, 50.0};
    case 4: return {1e-4, 1e-3, 1e-2};
    default: throw DimensionError("scenario case must be 1, 2, 3 or 4");
  }
}

/// Applies a grid value to the parameter the case sweeps.
inline ScenarioSpec with_grid_value(ScenarioSpec s, double v) {
  switch (s.case_id) {
    case 1: s.os = v; break;
    case 2: s.feature_noise = v; break;
    case 3:
      s.extra_multiple = v;
      s.extra_count.reset();
      break;
    case 4: s.obs_noise = v; break;
    default: throw DimensionError("scenario case must be 1, 2, 3 or 4");
  }
  return s;
}

struct Scenario {
  ScenarioSpec spec;
  LowRankTruth truth;
  std::array<Matrix, 3> raw_features;
  /// Training values carry the observation noise; test values are clean
  /// ground truth on entries disjoint from the training set.
  ProblemData data;
};

inline Scenario build_scenario(const ScenarioSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  Scenario sc;
  sc.spec = spec;
  sc.truth = gen_lowrank(spec.dims, spec.rank, rng);
  for (int i = 0; i < 3; ++i) {
    const auto k = static_cast<std::size_t>(i);
    sc.raw_features[k] = gen_features(sc.truth.b[k], spec.feature_noise, spec.extra_columns(i), rng);
  }
  const std::size_t m = sample_count(spec.dims, spec.rank, spec.os);
  const std::vector<Index3> omega = sample_indices(spec.dims, m, rng);
  const auto unobserved = static_cast<std::size_t>(tensor_size(spec.dims)) - m;
  const auto n_eval = std::min(unobserved, static_cast<std::size_t>(std::llround(spec.eval_multiple * static_cast<double>(m))));
  const std::vector<Index3> eval = sample_indices(spec.dims, n_eval, rng, omega);
  const std::vector<double> train_vals = add_obs_noise(sc.truth.entries_at(omega), spec.obs_noise, rng);
  const std::vector<double> eval_vals = sc.truth.entries_at(eval);

  auto assemble = [&spec](const std::vector<Index3>& idx, const std::vector<double>& vals) {
    std::vector<SparseTensor3::Entry> e(idx.size());
    for (std::size_t n = 0; n < idx.size(); ++n) e[n] = {idx[n], vals[n]};
    return SparseTensor3(spec.dims, std::move(e));
  };
  sc.data.train = assemble(omega, train_vals);
  if (n_eval > 0) sc.data.test = assemble(eval, eval_vals);
  sc.data.rank = spec.rank;
  const double a = spec.alpha_per_obs ? spec.alpha / static_cast<double>(m) : spec.alpha;
  sc.data.features = std::make_shared<const FeatureBasis>(
      FeatureBasis::from_raw(sc.raw_features, {a, a, a}, spec.dims, m, spec.rank));
  return sc;
}

/// The same problem with alpha replaced (features kept).
inline ProblemData with_alpha(const ProblemData& data, const std::array<double, 3>& alpha) {
  ProblemData out = data;
  auto f = std::make_shared<FeatureBasis>(*data.features);
  for (double a : alpha)
    if (!(a >= 0.0) || !std::isfinite(a)) throw DimensionError("alpha must be finite and >= 0");
  f->alpha = alpha;
  out.features = std::move(f);
  return out;
}

}  // namespace tcsi
