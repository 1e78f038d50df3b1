#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "htan_cli/commands.hpp"

using namespace htan;
using namespace htan::cli;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "htan");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("htan_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> tiny(const fs::path& out) {
  return {"--override", "seq_len=5",        "--override", "train_sequences=6", "--override", "test_sequences=4",
          "--override", "input_dim=3",      "--override", "hidden=4",          "--override", "basis=3",
          "--override", "aux_hidden=3",     "--override", "epochs=2",          "--override", "batch_size=3",
          "--out",      out.string()};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(RunConfig, DefaultsMatchTheShippedConfigFile) {
  RunConfig shipped = load_run_config(fs::path(HTAN_SOURCE_DIR) / "tools/configs/default.cfg");
  RunConfig defaults;
  EXPECT_EQ(shipped.to_text(), defaults.to_text());
}

TEST(RunConfig, ResolvedTextParsesBack) {
  RunConfig rc;
  rc.apply_override("coupling=0.6,0.1,0.3");
  rc.apply_override("transition=0.8,0.1,0.1;0.1,0.8,0.1;0.2,0.2,0.6");
  rc.apply_override("train.seed=9");
  rc.apply_override("theta_period=never");
  const RunConfig back = parse_run_config(rc.to_text());
  EXPECT_EQ(back.to_text(), rc.to_text());
  EXPECT_EQ(back.train.theta_period, 0u);
}

TEST(RunConfig, UnknownKeyReportsLineNumber) {
  try {
    parse_run_config("[data]\ntasks = 2\n\n[train]\nlamda = 0.1\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 5"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("lamda"), std::string::npos) << e.what();
  }
}

TEST(RunConfig, MalformedInputIsRejected) {
  EXPECT_THROW(parse_run_config("tasks = 2\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[data]\ntasks = two\n"), std::invalid_argument);
  EXPECT_THROW(parse_run_config("[nowhere]\nx = 1\n"), std::invalid_argument);
  RunConfig rc;
  EXPECT_THROW(rc.apply_override("seed=3"), ConfigError);  // data.seed or train.seed
  EXPECT_THROW(rc.apply_override("lambda"), ConfigError);
  rc.apply_override("data.seed=3");
  EXPECT_EQ(rc.data.seed, 3u);
}

TEST(Cli, MissingSubcommandIsUsageError) { EXPECT_EQ(run({}).code, kExitUsage); }

TEST(Cli, ConfigErrorExitsWithLineNumber) {
  const fs::path dir = scratch("badcfg");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.cfg") << "[model]\nblocks = 2\nwidth = 3\n";
  const CliResult r = run({"train", "--config", (dir / "bad.cfg").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
}

TEST(Cli, TrainWritesTheRunDirectory) {
  const fs::path dir = scratch("train");
  const CliResult r = run(concat({"train"}, tiny(dir)));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* f : {"resolved.cfg", "seed.txt", "train.data", "test.data", "metrics.csv", "timing.csv",
                        "checks.csv", "analysis.csv", "summary.json", "model.htan"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  // Header plus epochs × tasks rows.
  EXPECT_EQ(count_lines(slurp(dir / "metrics.csv")), 1u + 2u * 2u);
  EXPECT_EQ(slurp(dir / "metrics.csv").substr(0, 54), "epoch,task_id,loss,acc,reg_value,ltheta_value,wall_ms\n");
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  EXPECT_TRUE(summary.contains("test"));
  const RunConfig resolved = load_run_config(dir / "resolved.cfg");
  EXPECT_EQ(resolved.data.seq_len, 5u);
}

TEST(Cli, SameSeedGivesByteIdenticalMetrics) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  ASSERT_EQ(run(concat({"train", "--seed", "11"}, tiny(a))).code, kExitOk);
  ASSERT_EQ(run(concat({"train", "--seed", "11"}, tiny(b))).code, kExitOk);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "model.htan"), slurp(b / "model.htan"));
}

TEST(Cli, EvalOfSavedModelMatchesTrainingLog) {
  const fs::path dir = scratch("eval");
  ASSERT_EQ(run(concat({"train"}, tiny(dir))).code, kExitOk);
  const CliResult r = run({"eval", "--checkpoint", (dir / "model.htan").string(), "--data", (dir / "test.data").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto eval = nlohmann::json::parse(slurp(dir / "eval.json"));
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  EXPECT_EQ(eval["tasks"], summary["test"]["tasks"]);
  EXPECT_EQ(eval["mean_loss"], summary["test"]["mean_loss"]);
}

TEST(Cli, EvalRejectsCorruptedCheckpoint) {
  const fs::path dir = scratch("corrupt");
  ASSERT_EQ(run(concat({"train"}, tiny(dir))).code, kExitOk);
  {
    std::fstream f(dir / "model.htan", std::ios::in | std::ios::out | std::ios::binary);
    f.put('Z');
  }
  const CliResult r = run({"eval", "--checkpoint", (dir / "model.htan").string(), "--data", (dir / "test.data").string()});
  EXPECT_EQ(r.code, kExitIo);
}

TEST(Cli, EvalRejectsMismatchedDataset) {
  const fs::path dir = scratch("mismatch"), other = scratch("mismatch_data");
  ASSERT_EQ(run(concat({"train"}, tiny(dir))).code, kExitOk);
  ASSERT_EQ(run({"gen-data", "--override", "test_sequences=2", "--override", "train_sequences=2", "--out",
                 other.string()})
                .code,
            kExitOk);
  const CliResult r = run({"eval", "--checkpoint", (dir / "model.htan").string(), "--data", (other / "test.data").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("input_dim"), std::string::npos) << r.err;
}

TEST(Cli, AnalyzeSingleTaskHasNoPairs) {
  const fs::path dir = scratch("single");
  ASSERT_EQ(run(concat({"train", "--override", "tasks=1", "--override", "coupling=0.5"}, tiny(dir))).code, kExitOk);
  const CliResult r =
      run({"analyze", "--checkpoint", (dir / "model.htan").string(), "--data", (dir / "test.data").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::istringstream csv(slurp(dir / "analysis.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "block,slot,task_i,task_j,d_sq,metric_cond,gt_coupling,abs_cov");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    EXPECT_NE(line.find(",,,,"), std::string::npos) << line;
  }
  EXPECT_EQ(rows, 2u * 5u);
}

TEST(Cli, NonFiniteTrainingExitsWithDiagnostics) {
  const fs::path dir = scratch("nan");
  const CliResult r = run(concat({"train", "--override", "lr_phi=1e300"}, tiny(dir)));
  EXPECT_EQ(r.code, kExitNumerical) << r.err;
  EXPECT_TRUE(fs::exists(dir / "diagnostics.txt"));
}

TEST(Cli, ParamCountPrintsCrossover) {
  const CliResult r = run({"param-count"});
  ASSERT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("crossover T"), std::string::npos);
}

TEST(Cli, CovarianceBoundsForExtremeCouplings) {
  const fs::path dir = scratch("cov");
  const CliResult r = run({"covariance", "--override", "coupling=1", "--override", "train_sequences=300", "--out",
                           dir.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::istringstream csv(slurp(dir / "covariance.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "slot,task_i,task_j,abs_cov,gt_coupling");
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 40u);
}
