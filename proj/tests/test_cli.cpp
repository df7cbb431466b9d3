#include "test_support.hpp"

#include "jse/cli.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace jse;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "jse_cli");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  return {std::istreambuf_iterator<char>(is), {}};
}

// Runs the real binary; returns its exit status.
int run_binary(const std::string& args) {
  const std::string cmd = std::string(JSE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string strip_runtime(const std::string& csv) {
  // runtime_ms is the 14th column.
  std::istringstream is(csv);
  std::string line, out;
  while (std::getline(is, line)) {
    auto f = detail::csv_split(line);
    if (f.size() > 13) f[13].clear();
    for (std::size_t i = 0; i < f.size(); ++i) out += (i ? "," : "") + detail::csv_field(f[i]);
    out += '\n';
  }
  return out;
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"gen-toy", "--bogus"}).code, 2);
  EXPECT_EQ(cli({"fit", "--train", "a.csv"}).code, 2);
  EXPECT_EQ(cli({"--workers", "0", "sweep"}).code, 2);
  EXPECT_EQ(cli({"--seed", "x", "gen-toy"}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, DataErrorsExitThree) {
  const auto r = cli({"fit", "--train", "/nonexistent/train.csv", "--val", "/nonexistent/val.csv"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("/nonexistent/train.csv"), std::string::npos);
  const auto dir = jse::testing::temp_dir("cli_bad");
  EXPECT_EQ(cli({"--out", dir.string(), "gen-toy", "--rho", "1.5"}).code, 3);
  EXPECT_EQ(cli({"--config", "/nonexistent.cfg", "sweep"}).code, 3);
  EXPECT_EQ(cli({"report", "--results", "/nonexistent.csv"}).code, 3);
}

TEST(Cli, BinaryExitCodes) {
  EXPECT_EQ(run_binary("--help"), 0);
  EXPECT_EQ(run_binary("frobnicate"), 2);
  EXPECT_EQ(run_binary("report --results /nonexistent.csv"), 3);
}

TEST(Cli, GenToyFitTransformEval) {
  const auto dir = jse::testing::temp_dir("cli_flow");
  const std::string d = dir.string();
  auto r = cli({"--seed", "3", "--out", d, "gen-toy", "--rho", "0.8"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"train.csv", "val.csv", "test.csv"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(load_embeddings((dir / "train.csv").string()).size(), 1600);
  EXPECT_EQ(load_embeddings((dir / "test.csv").string()).size(), 2000);

  r = cli({"--seed", "1", "--out", d, "fit", "--method", "jse", "--train", d + "/train.csv", "--val", d + "/val.csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("d_sp_hat 1 "), std::string::npos) << r.out;
  ASSERT_TRUE(fs::exists(dir / "jse.artifact"));

  r = cli({"transform", "--artifact", d + "/jse.artifact", "--input", d + "/test.csv", "--output", d + "/t.csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto transformed = load_embeddings(d + "/t.csv");
  const Artifact a = load_artifact(d + "/jse.artifact");
  EXPECT_EQ(transformed.z(), a.transform(load_embeddings(d + "/test.csv").z()));

  const std::string log = d + "/eval.jsonl";
  for (int i = 0; i < 2; ++i) {
    r = cli({"eval", "--artifact", d + "/jse.artifact", "--test", d + "/test.csv", "--output", log});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  std::istringstream lines(slurp(log));
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["method"], "jse");
    EXPECT_GT(j["average"].get<double>(), 75.0);
    ++count;
  }
  EXPECT_EQ(count, 2);
}

TEST(Cli, FitOptions) {
  const auto dir = jse::testing::temp_dir("cli_opts");
  const std::string d = dir.string();
  ASSERT_EQ(cli({"--out", d, "gen-toy", "--rho", "0.5", "--n", "800"}).code, 0);
  const std::string tr = d + "/train.csv", va = d + "/val.csv";
  auto r = cli({"--out", d, "fit", "--method", "inlp", "--train", tr, "--val", va, "--pca", "10"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_artifact(d + "/inlp.artifact").preprocess, Preprocess::pca);
  r = cli({"--out", d, "fit", "--train", tr, "--val", va, "--pca", "5", "--demean-only"});
  EXPECT_EQ(r.code, 2);
  r = cli({"--out", d, "fit", "--train", tr, "--val", va, "--delta", "abc"});
  EXPECT_EQ(r.code, 2);
  r = cli({"--out", d, "fit", "--method", "adversarial", "--train", tr, "--val", va});
  EXPECT_EQ(r.code, 3);
  r = cli({"--out", d, "fit", "--method", "rlace", "--train", tr, "--val", va});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("converged"), std::string::npos);
}

TEST(Cli, SweepIsReproducibleAndReports) {
  const auto dir = jse::testing::temp_dir("cli_sweep");
  const fs::path cfg = dir / "small.cfg";
  {
    std::ofstream os(cfg);
    os << "[toy]\nn = 600\n[sweep]\nvalues = 0.0, 0.9\nmethods = jse, erm, inlp\nseeds = 3\n";
  }
  const std::string a = (dir / "a").string(), b = (dir / "b").string();
  ASSERT_EQ(cli({"--config", cfg.string(), "--out", a, "sweep"}).code, 0);
  ASSERT_EQ(cli({"--config", cfg.string(), "--out", b, "--workers", "2", "sweep"}).code, 0);
  const std::string ra = slurp(fs::path(a) / "results.csv");
  EXPECT_EQ(strip_runtime(ra), strip_runtime(slurp(fs::path(b) / "results.csv")));
  EXPECT_EQ(slurp(fs::path(a) / "cells.csv"), slurp(fs::path(b) / "cells.csv"));
  // Header plus 2 values x 3 seeds x 3 methods.
  EXPECT_EQ(std::count(ra.begin(), ra.end(), '\n'), 1 + 18);
  const std::string cells = slurp(fs::path(a) / "cells.csv");
  EXPECT_EQ(std::count(cells.begin(), cells.end(), '\n'), 1 + 6);
  EXPECT_TRUE(fs::exists(fs::path(a) / "plot.tsv"));

  const auto rep = cli({"report", "--results", a + "/results.csv"});
  ASSERT_EQ(rep.code, 0) << rep.err;
  EXPECT_NE(rep.out.find("rho = 0.9"), std::string::npos);
  EXPECT_NE(rep.out.find("inlp"), std::string::npos);

  const auto seeds = cli({"--config", cfg.string(), "--out", (dir / "c").string(), "sweep", "--seeds", "1"});
  ASSERT_EQ(seeds.code, 0);
  EXPECT_NE(seeds.out.find("6 runs"), std::string::npos) << seeds.out;
}
