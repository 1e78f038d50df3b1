#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "htan/synthetic.hpp"
#include "htan/training.hpp"
#include "htan_cli/run_config.hpp"

namespace htan::cli {

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitNumerical = 2, kExitIo = 3 };

struct TrainOutcome {
  std::filesystem::path dir;
  std::vector<train::EpochRecord> epochs;
  train::EvalResult test;
  std::vector<train::StepCheck> checks;
  train::InvariantReport invariants;
  double relation_spearman = 0.0;  // per-slot mean d² vs ground-truth coupling on the test split
};

/// Generates both splits, trains, evaluates and writes the run directory:
/// resolved.cfg, seed.txt, train.data, test.data, metrics.csv, timing.csv,
/// checks.csv, analysis.csv, summary.json and model.htan (plus periodic
/// checkpoints). On a non-finite loss writes diagnostics.txt and rethrows.
TrainOutcome run_training(const RunConfig& config, std::ostream& log);

/// One row per (epoch, task). wall_ms is written as 0 so that the file is a
/// pure function of config and seed; real timings go to timing.csv.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<train::EpochRecord>& records);
void write_timing_csv(const std::filesystem::path& path, const std::vector<train::EpochRecord>& records);

struct AnalysisRow {
  std::size_t block = 0;
  std::size_t slot = 0;
  std::optional<std::size_t> task_i, task_j;  // empty when T = 1
  std::optional<double> d_sq;
  double metric_cond = 0.0;
  double gt_coupling = 0.0;
  std::optional<double> abs_cov;
};

std::vector<AnalysisRow> analysis_rows(train::Model& model, const data::SequenceBatch& data);
void write_analysis_csv(const std::filesystem::path& path, const std::vector<AnalysisRow>& rows);
/// Spearman correlation between the per-slot d² (averaged over blocks and
/// task pairs) and the per-slot ground-truth coupling. 0 when T = 1.
double relation_spearman(const std::vector<AnalysisRow>& rows);

/// slot, task_i, task_j, abs_cov, gt_coupling for every slot and pair i < j.
void write_covariance_csv(const std::filesystem::path& path, const data::SequenceBatch& data);

/// Entry point shared by the `htan` executable and the tests.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace htan::cli
