// tcsi: command-line front end for low-rank Tucker completion with side information.
//
//   tcsi complete  --train obs.txt --rank 5,5,5 [--features1 f1.txt ...] [--alpha a,a,a] ...
//   tcsi simulate  --case 1 [--os 0.5] [--out dir] ...
//   tcsi gradcheck [--trials 10] [--dims 12] [--rank 4] ...
//   tcsi bench     [--case 1] [--seeds 5] ...
//
// Exit codes: 0 clean, 1 check or solve failure, 2 usage error.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "tcsi/tcsi.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace tcsi;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

// Thread count from TCSI_THREADS; the kernels are sequential unless Eigen was
// built with OpenMP, so this only reaches Eigen.
int configure_threads() {
  int threads = 1;
  if (const char* env = std::getenv("TCSI_THREADS")) {
    try {
      threads = std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      throw UsageError(std::string("TCSI_THREADS must be a positive integer, got '") + env + "'");
    }
  }
  Eigen::setNbThreads(threads);
  return threads;
}

template <class T>
std::array<T, 3> triple(const std::vector<T>& v, const std::string& what) {
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() != 3) throw UsageError(what + " needs one or three comma-separated values");
  return {v[0], v[1], v[2]};
}

MultiLinearRank parse_rank(const std::vector<Index>& v) {
  const auto r = triple(v, "--rank");
  return MultiLinearRank{{r[0], r[1], r[2]}};
}

MetricMode parse_metric(const std::string& s) { return s == "ls" ? MetricMode::least_squares : MetricMode::preconditioned_side_info; }
InitMode parse_init(const std::string& s) { return s == "hosvd" ? InitMode::hosvd : InitMode::random; }
BetaRule parse_beta(const std::string& s) {
  if (s == "fr") return BetaRule::fletcher_reeves;
  if (s == "pr") return BetaRule::polak_ribiere_plus;
  return BetaRule::hybrid;
}

json config_json(const SolverConfig& c) {
  json j;
  j["max_iters"] = c.max_iters;
  j["grad_tol"] = c.grad_tol;
  j["nrmse_target"] = c.nrmse_target ? json(*c.nrmse_target) : json(nullptr);
  j["metric"] = to_string(c.metric_mode);
  j["init"] = to_string(c.init_mode);
  j["beta"] = to_string(c.beta_rule);
  j["seed"] = c.seed;
  j["armijo_c"] = c.line_search.armijo_c;
  j["backtrack"] = c.line_search.backtrack;
  j["line_search_trials"] = c.line_search.max_trials;
  j["inner_rel_tol"] = c.geometry.inner.rel_tol;
  j["inner_max_iters"] = c.geometry.inner.max_iters;
  j["flag_tol"] = c.geometry.flag_tol;
  j["check_flags"] = c.check_flags;
  return j;
}

json spec_json(const ScenarioSpec& s) {
  json j;
  j["case"] = s.case_id;
  j["dims"] = {s.dims[0], s.dims[1], s.dims[2]};
  j["rank"] = {s.rank[0], s.rank[1], s.rank[2]};
  j["os"] = s.os;
  j["feature_noise"] = s.feature_noise;
  j["extra_columns"] = {s.extra_columns(0), s.extra_columns(1), s.extra_columns(2)};
  j["obs_noise"] = s.obs_noise;
  j["alpha"] = s.alpha;
  j["alpha_per_obs"] = s.alpha_per_obs;
  j["eval_multiple"] = s.eval_multiple;
  j["seed"] = s.seed;
  return j;
}

json base_manifest(const std::string& command, int threads, std::uint64_t seed) {
  json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["seed"] = seed;
  m["threads"] = threads;
  return m;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  return out;
}

void write_point(const fs::path& dir, const TuckerPoint& p) {
  for (int i = 0; i < 3; ++i) {
    auto out = open_out(dir / ("U" + std::to_string(i + 1) + ".txt"));
    write_matrix(out, p.u[static_cast<std::size_t>(i)]);
  }
  auto out = open_out(dir / "core.txt");
  write_matrix(out, matricize(p.core, 0));
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << std::scientific << v;
  return os.str();
}

// Solver knobs shared by complete, simulate and bench.
struct SolverFlags {
  int max_iters = 300;
  double tol = 1e-8;
  std::optional<double> nrmse_target;
  std::string init = "random";
  std::string beta = "hybrid";

  void add(CLI::App* app) {
    app->add_option("--max-iters", max_iters, "Iteration cap")->check(CLI::PositiveNumber);
    app->add_option("--tol", tol, "Stop when the squared Riemannian gradient norm falls below this")->check(CLI::PositiveNumber);
    app->add_option("--nrmse-target", nrmse_target, "Stop when the training NRMSE falls below this")->check(CLI::PositiveNumber);
    app->add_option("--init", init, "Initial point")->check(CLI::IsMember({"random", "hosvd"}));
    app->add_option("--beta", beta, "Conjugate-gradient beta rule")->check(CLI::IsMember({"hybrid", "fr", "pr"}));
  }

  SolverConfig config(MetricMode metric, std::uint64_t seed) const {
    SolverConfig c;
    c.max_iters = max_iters;
    c.grad_tol = tol;
    c.nrmse_target = nrmse_target;
    c.metric_mode = metric;
    c.init_mode = parse_init(init);
    c.beta_rule = parse_beta(beta);
    c.seed = seed;
    c.validate();
    return c;
  }
};

struct RunSummary {
  std::string name;
  SolveResult result;
  double seconds = 0.0;
  double train_rmse = 0.0;
  std::optional<double> test_rmse;
};

RunSummary run_solver(const std::string& name, const ProblemData& data, const SolverConfig& config, const fs::path& trace_path) {
  auto trace_out = open_out(trace_path);
  write_trace_header(trace_out);
  RunSummary s{name, {}, 0.0, 0.0, std::nullopt};
  s.result = solve_rcg(data, config, std::nullopt, [&trace_out](const IterTrace& t) {
    write_trace_row(trace_out, t);
    trace_out.flush();
  });
  const IterTrace& last = s.result.trace.back();
  s.seconds = last.seconds;
  s.train_rmse = last.train_rmse;
  s.test_rmse = last.test_rmse;
  return s;
}

json summary_json(const RunSummary& s, const SolverConfig& c, const std::array<double, 3>& alpha) {
  json j;
  j["run"] = s.name;
  j["config"] = config_json(c);
  j["alpha"] = alpha;
  j["iterations"] = s.result.trace.back().iter;
  j["termination"] = to_string(s.result.reason);
  j["seconds"] = s.seconds;
  j["train_rmse"] = s.train_rmse;
  j["test_rmse"] = s.test_rmse ? json(*s.test_rmse) : json(nullptr);
  j["restarts"] = s.result.restarts;
  j["regularized"] = s.result.regularized;
  return j;
}

// ---------------------------------------------------------------- complete

struct CompleteFlags {
  std::string train, test, trace_out, out = ".";
  std::array<std::string, 3> features;
  std::vector<Index> rank;
  std::vector<double> alpha{0.0};
  std::string metric = "precond";
  std::uint64_t seed = 1;
  SolverFlags solver;
};

int cmd_complete(const CompleteFlags& f, int threads) {
  const MultiLinearRank rank = parse_rank(f.rank);
  const auto alpha = triple(f.alpha, "--alpha");
  ProblemData data;
  data.train = read_observations_file(f.train);
  data.rank = rank;
  if (!f.test.empty()) data.test = read_observations_file(f.test);
  std::array<Matrix, 3> raw;
  for (std::size_t i = 0; i < 3; ++i)
    if (!f.features[i].empty()) raw[i] = read_matrix_file(f.features[i]);
  data.features = std::make_shared<const FeatureBasis>(FeatureBasis::from_raw(raw, alpha, data.train.dims(), data.train.nnz(), rank));
  for (const std::string& w : data.features->warnings) std::cerr << "warning: " << w << '\n';
  data.validate();

  const SolverConfig config = f.solver.config(parse_metric(f.metric), f.seed);
  const fs::path out_dir(f.out);
  fs::create_directories(out_dir);
  const fs::path trace_path = f.trace_out.empty() ? out_dir / "trace.csv" : fs::path(f.trace_out);

  json manifest = base_manifest("complete", threads, f.seed);
  json inputs;
  inputs["train"] = {{"path", f.train}, {"sha256", sha256_file(f.train)}};
  if (!f.test.empty()) inputs["test"] = {{"path", f.test}, {"sha256", sha256_file(f.test)}};
  for (std::size_t i = 0; i < 3; ++i)
    if (!f.features[i].empty())
      inputs["features" + std::to_string(i + 1)] = {{"path", f.features[i]}, {"sha256", sha256_file(f.features[i])}};
  manifest["inputs"] = inputs;
  manifest["rank"] = {rank[0], rank[1], rank[2]};
  manifest["alpha"] = alpha;
  manifest["config"] = config_json(config);
  manifest["outputs"] = {{"trace", trace_path.string()}, {"factors", out_dir.string()}};
  write_json(out_dir / "manifest.json", manifest);

  const RunSummary s = run_solver("complete", data, config, trace_path);
  write_point(out_dir, s.result.point);
  manifest["result"] = summary_json(s, config, alpha);
  write_json(out_dir / "manifest.json", manifest);

  std::cout << "termination: " << to_string(s.result.reason) << '\n'
            << "iterations: " << s.result.trace.back().iter << '\n'
            << "train_rmse: " << format_double(s.train_rmse) << '\n';
  if (s.test_rmse) std::cout << "test_rmse: " << format_double(*s.test_rmse) << '\n';
  return 0;
}

// ---------------------------------------------------------------- simulate

struct ScenarioFlags {
  int case_id = 1;
  std::vector<Index> dims, rank;
  std::optional<double> os, feature_noise, obs_noise, alpha;
  std::optional<Index> extra_cols;
  std::optional<bool> alpha_per_obs;
  bool preset_alpha = false;
  std::uint64_t seed = 1;

  void add(CLI::App* app, bool case_required) {
    auto* c = app->add_option("--case", case_id, "Scenario 1..4")->check(CLI::Range(1, 4));
    if (case_required) c->required();
    app->add_option("--dims", dims, "n1,n2,n3 (default 60,60,60)")->delimiter(',');
    app->add_option("--rank", rank, "r1,r2,r3 (default 5,5,5)")->delimiter(',');
    app->add_option("--os", os, "Oversampling ratio")->check(CLI::PositiveNumber);
    app->add_option("--feature-noise", feature_noise, "Feature noise s")->check(CLI::NonNegativeNumber);
    app->add_option("--extra-cols", extra_cols, "Irrelevant feature columns per mode")->check(CLI::NonNegativeNumber);
    app->add_option("--obs-noise", obs_noise, "Observation noise epsilon")->check(CLI::NonNegativeNumber);
    app->add_option("--alpha", alpha, "Feature weight alpha (default 1e5 per observation)")->check(CLI::NonNegativeNumber);
    app->add_option("--alpha-per-obs", alpha_per_obs, "Divide --alpha by |Omega|");
    app->add_flag("--preset-alpha", preset_alpha, "Use the case preset alpha instead of the default");
    app->add_option("--seed", seed, "Random seed");
  }

  ScenarioSpec spec() const {
    ScenarioSpec s = scenario_preset(case_id);
    if (!preset_alpha) {
      s.alpha = 1e5;
      s.alpha_per_obs = true;
    }
    if (!dims.empty()) s.dims = triple(dims, "--dims");
    if (!rank.empty()) s.rank = parse_rank(rank);
    if (os) s.os = *os;
    if (feature_noise) s.feature_noise = *feature_noise;
    if (extra_cols) s.extra_count = *extra_cols;
    if (obs_noise) s.obs_noise = *obs_noise;
    if (alpha) s.alpha = *alpha;
    if (alpha_per_obs) s.alpha_per_obs = *alpha_per_obs;
    s.seed = seed;
    s.validate();
    return s;
  }
};

void write_instance(const fs::path& dir, const Scenario& sc) {
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "train.txt");
    write_observations(out, sc.data.train);
  }
  if (sc.data.test) {
    auto out = open_out(dir / "test.txt");
    write_observations(out, *sc.data.test);
  }
  for (int i = 0; i < 3; ++i) {
    auto out = open_out(dir / ("features" + std::to_string(i + 1) + ".txt"));
    write_matrix(out, sc.raw_features[static_cast<std::size_t>(i)]);
  }
}

void print_summary(std::ostream& os, const std::vector<RunSummary>& runs) {
  os << std::left << std::setw(16) << "run" << std::setw(8) << "iters" << std::setw(22) << "termination" << std::setw(12) << "seconds"
     << std::setw(14) << "train_rmse" << "test_rmse" << '\n';
  for (const RunSummary& s : runs)
    os << std::left << std::setw(16) << s.name << std::setw(8) << s.result.trace.back().iter << std::setw(22) << to_string(s.result.reason)
       << std::setw(12) << fmt(s.seconds) << std::setw(14) << fmt(s.train_rmse) << (s.test_rmse ? fmt(*s.test_rmse) : "-") << '\n';
}

int cmd_simulate(const ScenarioFlags& sf, const SolverFlags& solver, const std::string& out, bool dump_instance, int threads) {
  const ScenarioSpec spec = sf.spec();
  std::cout << "seed: " << spec.seed << '\n';
  const Scenario sc = build_scenario(spec);
  const fs::path out_dir(out);
  fs::create_directories(out_dir);
  if (dump_instance) write_instance(out_dir / "instance", sc);

  struct Variant {
    std::string name;
    MetricMode metric;
    bool ablate;
  };
  const std::vector<Variant> variants{{"precond", MetricMode::preconditioned_side_info, false},
                                      {"least_squares", MetricMode::least_squares, false},
                                      {"alpha0", MetricMode::least_squares, true}};
  json manifest = base_manifest("simulate", threads, spec.seed);
  manifest["scenario"] = spec_json(spec);
  manifest["n_obs"] = sc.data.train.nnz();
  manifest["n_eval"] = sc.data.test ? sc.data.test->nnz() : 0;
  json runs = json::array();
  std::vector<RunSummary> summaries;
  for (const Variant& v : variants) {
    const std::array<double, 3> alpha = v.ablate ? std::array<double, 3>{0.0, 0.0, 0.0} : sc.data.features->alpha;
    const ProblemData data = with_alpha(sc.data, alpha);
    const SolverConfig config = solver.config(v.metric, spec.seed);
    summaries.push_back(run_solver(v.name, data, config, out_dir / ("trace_" + v.name + ".csv")));
    json j = summary_json(summaries.back(), config, alpha);
    j["trace"] = "trace_" + v.name + ".csv";
    runs.push_back(j);
  }
  manifest["runs"] = runs;
  write_json(out_dir / "manifest.json", manifest);

  auto csv = open_out(out_dir / "summary.csv");
  csv << "run,iterations,termination,seconds,train_rmse,test_rmse\n";
  for (const RunSummary& s : summaries)
    csv << s.name << ',' << s.result.trace.back().iter << ',' << to_string(s.result.reason) << ',' << format_double(s.seconds) << ','
        << format_double(s.train_rmse) << ',' << (s.test_rmse ? format_double(*s.test_rmse) : std::string()) << '\n';
  print_summary(std::cout, summaries);
  return 0;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(const CheckOptions& opts) {
  const std::vector<CheckResult> results = run_checks(opts);
  std::vector<std::string> failed;
  for (const CheckResult& r : results) {
    std::cout << std::left << std::setw(36) << r.name << std::setw(14) << fmt(r.value) << "<= " << fmt(r.threshold) << "  "
              << (r.pass() ? "ok" : "FAIL") << '\n';
    if (!r.pass()) failed.push_back(r.name);
  }
  if (failed.empty()) return 0;
  for (const std::string& n : failed) std::cerr << "check failed: " << n << '\n';
  return 1;
}

// ---------------------------------------------------------------- bench

int cmd_bench(ScenarioFlags sf, const SolverFlags& solver, int seeds, const std::string& out, int threads) {
  const fs::path out_dir(out);
  fs::create_directories(out_dir);
  std::cout << "seed: " << sf.seed << '\n';
  const std::uint64_t base = sf.seed;
  json manifest = base_manifest("bench", threads, base);
  json rows = json::array();
  auto csv = open_out(out_dir / "bench.csv");
  csv << "seed,metric,iterations,termination,seconds,train_rmse,test_rmse\n";
  std::vector<double> ratios;
  std::cout << std::left << std::setw(8) << "seed" << std::setw(16) << "metric" << std::setw(8) << "iters" << std::setw(22) << "termination"
            << std::setw(12) << "seconds" << "test_rmse" << '\n';
  for (int k = 0; k < seeds; ++k) {
    sf.seed = base + static_cast<std::uint64_t>(k);
    const ScenarioSpec spec = sf.spec();
    if (k == 0) manifest["scenario"] = spec_json(spec);
    const Scenario sc = build_scenario(spec);
    std::array<int, 2> iters{};
    int m = 0;
    for (MetricMode metric : {MetricMode::preconditioned_side_info, MetricMode::least_squares}) {
      const SolverConfig config = solver.config(metric, spec.seed);
      const SolveResult r = solve_rcg(sc.data, config);
      const IterTrace& last = r.trace.back();
      iters[static_cast<std::size_t>(m++)] = last.iter;
      csv << spec.seed << ',' << to_string(metric) << ',' << last.iter << ',' << to_string(r.reason) << ',' << format_double(last.seconds)
          << ',' << format_double(last.train_rmse) << ',' << (last.test_rmse ? format_double(*last.test_rmse) : std::string()) << '\n';
      std::cout << std::left << std::setw(8) << spec.seed << std::setw(16) << (metric == MetricMode::least_squares ? "least_squares" : "precond")
                << std::setw(8) << last.iter << std::setw(22) << to_string(r.reason) << std::setw(12) << fmt(last.seconds)
                << (last.test_rmse ? fmt(*last.test_rmse) : "-") << '\n';
      rows.push_back({{"seed", spec.seed}, {"config", config_json(config)}, {"iterations", last.iter}, {"termination", to_string(r.reason)},
                      {"seconds", last.seconds}});
    }
    ratios.push_back(static_cast<double>(iters[0]) / std::max(1, iters[1]));
  }
  std::sort(ratios.begin(), ratios.end());
  const double median = ratios[ratios.size() / 2];
  std::cout << "median iteration ratio precond/least_squares: " << fmt(median) << '\n';
  manifest["runs"] = rows;
  manifest["median_iteration_ratio"] = median;
  write_json(out_dir / "manifest.json", manifest);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank Tucker tensor completion with side information"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  CompleteFlags cf;
  auto* complete = app.add_subcommand("complete", "Complete a tensor from observation files");
  complete->add_option("--train", cf.train, "Training observations")->required()->check(CLI::ExistingFile);
  complete->add_option("--rank", cf.rank, "r1,r2,r3")->required()->delimiter(',');
  complete->add_option("--test", cf.test, "Held-out observations")->check(CLI::ExistingFile);
  for (std::size_t i = 0; i < 3; ++i)
    complete->add_option("--features" + std::to_string(i + 1), cf.features[i], "Feature matrix of mode " + std::to_string(i + 1))
        ->check(CLI::ExistingFile);
  complete->add_option("--alpha", cf.alpha, "a1,a2,a3")->delimiter(',')->check(CLI::NonNegativeNumber);
  complete->add_option("--metric", cf.metric, "Metric")->check(CLI::IsMember({"precond", "ls"}));
  complete->add_option("--seed", cf.seed, "Random seed for the initial point");
  complete->add_option("--trace-out", cf.trace_out, "Trace CSV path (default OUT/trace.csv)");
  complete->add_option("--out", cf.out, "Directory for factors and manifest");
  cf.solver.add(complete);

  ScenarioFlags sim_sf;
  SolverFlags sim_solver;
  std::string sim_out = "simulate_out";
  bool dump_instance = false;
  auto* simulate = app.add_subcommand("simulate", "Run a synthetic scenario with both metrics and the alpha=0 ablation");
  sim_sf.add(simulate, true);
  sim_solver.add(simulate);
  simulate->add_option("--out", sim_out, "Output directory");
  simulate->add_flag("--write-instance", dump_instance, "Also write the generated instance as text files");

  CheckOptions co;
  auto* gradcheck = app.add_subcommand("gradcheck", "Check the gradient and geometry on random instances");
  gradcheck->add_option("--trials", co.trials, "Random instances")->check(CLI::PositiveNumber);
  gradcheck->add_option("--dims", co.max_dim, "Largest mode size")->check(CLI::Range(2, 200));
  gradcheck->add_option("--rank", co.max_rank, "Largest rank")->check(CLI::Range(1, 20));
  gradcheck->add_option("--features", co.max_features, "Largest feature count")->check(CLI::Range(1, 200));
  gradcheck->add_option("--directions", co.directions, "Directions per instance")->check(CLI::PositiveNumber);
  gradcheck->add_option("--seed", co.seed, "Random seed");
  gradcheck->add_flag("--corrupt-metric", co.corrupt_metric, "Test hook")->group("");

  ScenarioFlags bench_sf;
  SolverFlags bench_solver;
  int seeds = 5;
  std::string bench_out = "bench_out";
  auto* bench = app.add_subcommand("bench", "Compare the two metrics over several seeds");
  bench_sf.add(bench, false);
  bench_solver.add(bench);
  bench->add_option("--seeds", seeds, "Number of seeds")->check(CLI::PositiveNumber);
  bench->add_option("--out", bench_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const int threads = configure_threads();
    if (*complete) return cmd_complete(cf, threads);
    if (*simulate) return cmd_simulate(sim_sf, sim_solver, sim_out, dump_instance, threads);
    if (*gradcheck) {
      if (co.max_features < co.max_rank) throw UsageError("--features must be >= --rank");
      return cmd_gradcheck(co);
    }
    if (*bench) return cmd_bench(bench_sf, bench_solver, seeds, bench_out, threads);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
