#include <gtest/gtest.h>
#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "tcsi/tcsi.hpp"

using namespace tcsi;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tcsi_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

CliRun run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string("TCSI_THREADS=1 '") + TCSI_CLI_PATH + "' " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// summary.csv rows as name -> fields, seconds column dropped.
std::map<std::string, std::vector<std::string>> read_summary(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "run,iterations,termination,seconds,train_rmse,test_rmse");
  std::map<std::string, std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() < 6) f.resize(6);
    rows[f[0]] = {f[1], f[2], f[4], f[5]};
  }
  return rows;
}

Scenario small_scenario() {
  ScenarioSpec s = scenario_preset(1);
  s.dims = {12, 11, 10};
  s.rank = MultiLinearRank{{2, 2, 2}};
  s.os = 3.0;
  s.seed = 4;
  return build_scenario(s);
}

void write_file(const fs::path& p, const SparseTensor3& s) {
  std::ofstream out(p);
  write_observations(out, s);
}

}  // namespace

TEST(Cli, HelpExitsZero) {
  const fs::path dir = scratch("help");
  const CliRun r = run_cli("--help", dir);
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("complete"), std::string::npos);
}

TEST(Cli, CompleteWritesTraceFactorsAndManifest) {
  const fs::path dir = scratch("complete");
  const Scenario sc = small_scenario();
  write_file(dir / "train.txt", sc.data.train);
  write_file(dir / "test.txt", *sc.data.test);
  const CliRun r = run_cli("complete --train " + (dir / "train.txt").string() + " --test " + (dir / "test.txt").string() +
                            " --rank 2,2,2 --max-iters 15 --out " + (dir / "out").string(),
                        dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("termination: "), std::string::npos);
  EXPECT_NE(r.out.find("test_rmse: "), std::string::npos);
  std::ifstream trace(dir / "out" / "trace.csv");
  std::string header;
  std::getline(trace, header);
  EXPECT_EQ(header, "iter,seconds,cost,grad_norm_sq,step,beta,train_rmse,test_rmse");
  for (const char* f : {"U1.txt", "U2.txt", "U3.txt", "core.txt", "manifest.json"}) EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  EXPECT_EQ(read_matrix_file((dir / "out" / "U2.txt").string()).rows(), 11);
  const std::string manifest = slurp(dir / "out" / "manifest.json");
  EXPECT_NE(manifest.find("sha256"), std::string::npos);
  EXPECT_NE(manifest.find("\"result\""), std::string::npos);
}

TEST(Cli, MissingRankIsAUsageError) {
  const fs::path dir = scratch("norank");
  write_file(dir / "train.txt", small_scenario().data.train);
  const CliRun r = run_cli("complete --train " + (dir / "train.txt").string(), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("rank"), std::string::npos);
}

TEST(Cli, MalformedInputIsAUsageErrorNamingTheLine) {
  const fs::path dir = scratch("malformed");
  {
    std::ofstream out(dir / "train.txt");
    out << "tensor3 2 2 2 2\n1 1 1 1\n1 1 1 2\n";
  }
  const CliRun r = run_cli("complete --rank 1 --train " + (dir / "train.txt").string() + " --out " + (dir / "out").string(), dir);
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
}

TEST(Cli, LeastSquaresWithZeroAlphaMatchesTheLibrary) {
  const fs::path dir = scratch("ls_alpha0");
  const Scenario sc = small_scenario();
  write_file(dir / "train.txt", sc.data.train);
  const CliRun r = run_cli("complete --train " + (dir / "train.txt").string() +
                            " --rank 2,2,2 --metric ls --alpha 0,0,0 --seed 3 --max-iters 25 --out " + (dir / "out").string(),
                        dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const std::vector<IterTrace> cli = read_file((dir / "out" / "trace.csv").string(), [](std::istream& in) { return read_trace(in); });

  ProblemData data;
  data.train = read_observations_file((dir / "train.txt").string());
  data.rank = sc.data.rank;
  data.features = std::make_shared<const FeatureBasis>(
      FeatureBasis::from_raw({}, {0, 0, 0}, data.train.dims(), data.train.nnz(), data.rank));
  SolverConfig config;
  config.metric_mode = MetricMode::least_squares;
  config.seed = 3;
  config.max_iters = 25;
  const SolveResult lib = solve_rcg(data, config);
  ASSERT_EQ(cli.size(), lib.trace.size());
  for (std::size_t n = 0; n < cli.size(); ++n) {
    EXPECT_NEAR(cli[n].cost, lib.trace[n].cost, 1e-12 * (1.0 + lib.trace[n].cost)) << n;
    EXPECT_NEAR(cli[n].train_rmse, lib.trace[n].train_rmse, 1e-12) << n;
  }
}

TEST(Cli, SimulateCaseOneSeparatesSideInformationFromAblation) {
  const fs::path dir = scratch("simulate");
  const CliRun r = run_cli("simulate --case 1 --dims 30,30,30 --rank 3,3,3 --os 0.5 --seed 2 --out " + dir.string() + "/out", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("seed: 2"), std::string::npos);
  const auto rows = read_summary(dir / "out" / "summary.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_LE(std::stod(rows.at("precond")[3]), 1e-2);
  EXPECT_LE(std::stod(rows.at("least_squares")[3]), 1e-2);
  EXPECT_GT(std::stod(rows.at("alpha0")[3]), 1e-1);
  for (const char* f : {"trace_precond.csv", "trace_least_squares.csv", "trace_alpha0.csv", "manifest.json"})
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
}

TEST(Cli, SimulateIsDeterministic) {
  const fs::path dir = scratch("determinism");
  const std::string common = "simulate --case 4 --dims 15,15,15 --rank 2,2,2 --max-iters 20 --seed 9 --out ";
  ASSERT_EQ(run_cli(common + (dir / "a").string(), dir).code, 0);
  ASSERT_EQ(run_cli(common + (dir / "b").string(), dir).code, 0);
  EXPECT_EQ(read_summary(dir / "a" / "summary.csv"), read_summary(dir / "b" / "summary.csv"));
  const auto ta = read_file((dir / "a" / "trace_precond.csv").string(), [](std::istream& in) { return read_trace(in); });
  const auto tb = read_file((dir / "b" / "trace_precond.csv").string(), [](std::istream& in) { return read_trace(in); });
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t n = 0; n < ta.size(); ++n) {
    EXPECT_EQ(ta[n].cost, tb[n].cost);
    EXPECT_EQ(ta[n].test_rmse, tb[n].test_rmse);
  }
}

TEST(Cli, SimulateRejectsOversamplingBeyondTheTensor) {
  const fs::path dir = scratch("oversample");
  const CliRun r = run_cli("simulate --case 1 --dims 4,4,4 --rank 2,2,2 --os 10 --out " + (dir / "out").string(), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("oversampling"), std::string::npos) << r.err;
}

TEST(Cli, GradcheckDefaultsPass) {
  const fs::path dir = scratch("gradcheck");
  const CliRun r = run_cli("gradcheck", dir);
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("fd_riemannian_gradient"), std::string::npos);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, GradcheckZeroTrialsIsAUsageError) {
  const fs::path dir = scratch("gradcheck0");
  EXPECT_EQ(run_cli("gradcheck --trials 0", dir).code, 2);
}

TEST(Cli, GradcheckDetectsACorruptedMetric) {
  const fs::path dir = scratch("gradcheck_corrupt");
  const CliRun r = run_cli("gradcheck --trials 2 --corrupt-metric", dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("check failed: "), std::string::npos);
}
