#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "htan/tensor.hpp"

/// Regime-switching multi-task sequences whose cross-task label coupling is
/// driven by a hidden Markov chain, plus the covariance statistics used to
/// inspect that coupling.
namespace htan::data {

struct RegimeSwitchingSpec {
  std::size_t tasks = 2;
  std::size_t input_dim = 8;
  std::size_t seq_len = 40;
  std::size_t classes = 3;  // every task uses the same label set
  std::size_t sequences = 500;
  /// Regime transition matrix, row-stochastic. Empty means "stay with
  /// probability 1 − 1/dwell, otherwise jump uniformly to another regime".
  std::vector<std::vector<double>> transition;
  double dwell = 10.0;
  /// ρ per regime: probability that task t ≥ 2 copies task 1's label.
  std::vector<double> coupling{0.95, 0.05};
  std::size_t initial_regime = 0;
  /// Class means are class_separation · e_π(k) for a random coordinate map π.
  double class_separation = 2.0;
  std::uint64_t seed = 7;

  std::size_t regimes() const noexcept { return coupling.size(); }
  /// Explicit transition matrix, or the one implied by `dwell`.
  std::vector<std::vector<double>> transition_matrix() const;
  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  /// Assigns one `[data]` key; throws std::invalid_argument on an unknown key
  /// or malformed value.
  void set(const std::string& key, const std::string& value);
  /// `[data]`-style `key = value` rendering, readable by `parse`.
  std::string to_text() const;
  static RegimeSwitchingSpec parse(const std::string& text);
};

enum class Split : std::uint64_t { train = 0, test = 1 };

struct SequenceBatch {
  std::size_t tasks = 0;
  std::size_t seq_len = 0;
  std::size_t input_dim = 0;
  std::size_t classes = 0;
  Tensor inputs;                        // B × N × d_in
  std::vector<std::vector<int>> labels;  // T × (B·N), index b·N + n
  std::vector<int> regimes;              // B·N
  std::vector<double> coupling;          // ρ per regime id

  std::size_t size() const noexcept { return regimes.size() / (seq_len == 0 ? 1 : seq_len); }
  int label(std::size_t task, std::size_t seq, std::size_t slot) const { return labels[task][seq * seq_len + slot]; }
  int regime(std::size_t seq, std::size_t slot) const { return regimes[seq * seq_len + slot]; }
  /// Row `slot` of sequence `seq`.
  std::span<const double> input(std::size_t seq, std::size_t slot) const;
};

/// Deterministic in (spec, split). The label rule (class means) depends on
/// the seed only, so the train and test splits share it.
SequenceBatch generate_dataset(const RegimeSwitchingSpec& spec, Split split = Split::train);

/// E[Y₁Y₂] − E[Y₁]E[Y₂] with Y₁ = 1{y1 = a}, Y₂ = 1{y2 = b}.
double empirical_covariance(std::span<const int> y1, std::span<const int> y2, int a, int b);
/// Covariance between tasks i and j at one slot over all sequences.
double slot_covariance(const SequenceBatch& batch, std::size_t task_i, std::size_t task_j, std::size_t slot, int a,
                       int b);
/// Per slot, the mean of |cov| over all C² event pairs.
std::vector<double> mean_abs_covariance(const SequenceBatch& batch, std::size_t task_i, std::size_t task_j);

/// Per slot, the mean of ρ(r_n) over the batch.
std::vector<double> ground_truth_relation(const SequenceBatch& batch);

/// Rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

/// One file per split: u64 length of the spec text, the spec text, then a
/// tensor container with `inputs`, `labels` and `regimes`.
void save_dataset(const std::filesystem::path& path, const RegimeSwitchingSpec& spec, const SequenceBatch& batch);
SequenceBatch load_dataset(const std::filesystem::path& path, RegimeSwitchingSpec* spec_out = nullptr);

}  // namespace htan::data
