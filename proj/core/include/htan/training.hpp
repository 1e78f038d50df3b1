#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "htan/checkpoint.hpp"
#include "htan/errors.hpp"
#include "htan/sequence.hpp"
#include "htan/spd.hpp"
#include "htan/synthetic.hpp"

/// Adversarial training of HTAN (Φ) against its per-block SPDNet metrics (Θ).
namespace htan::train {

struct TrainConfig {
  seq::HtanConfig model;
  std::size_t spd_layers = 2;      // K
  bool spd_identity_init = false;  // 𝓜₀ = I instead of the Gaussian Gram matrix of β₁
  double lambda = 0.01;
  double lr_phi = 1e-3;
  double lr_theta = 1e-3;
  std::size_t theta_period = 1;  // 0 disables Θ updates
  std::size_t epochs = 5;
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;
  bool detach_metric = false;  // stop the regularizer's gradient at β before the metric network
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  /// Throws std::invalid_argument on the first invalid field.
  void validate() const;
};

/// HTAN parameters plus one SPDNet per block.
///
/// HTAN is initialised from the stream `seed`, the SPDNets from `seed + 1`, so
/// the HTAN initialisation does not depend on K or on the SPDNet layout.
class Model {
 public:
  explicit Model(const TrainConfig& config);

  const TrainConfig& config() const noexcept { return config_; }
  seq::HtanParams& htan() noexcept { return htan_; }
  std::vector<spd::SPDNetParams>& spdnets() noexcept { return spdnets_; }

  void for_each_phi(const std::function<void(Parameter&)>& fn);
  void for_each_theta(const std::function<void(Parameter&)>& fn);

  /// Every parameter by name plus `meta.*` tensors describing the shape.
  TensorBundle state();
  /// Overwrites parameters from `bundle`; throws FormatError naming the first
  /// missing or mis-shaped field.
  void load_state(const TensorBundle& bundle);

 private:
  TrainConfig config_;
  seq::HtanParams htan_;
  std::vector<spd::SPDNetParams> spdnets_;
};

void save_model(const std::filesystem::path& path, Model& model);
/// Rebuilds the model from the checkpoint's own shape description.
Model load_model(const std::filesystem::path& path);

// --- Objectives -----------------------------------------------------------

using MetricTrace = std::vector<std::vector<Var>>;    // [block][slot], M×M
using DistanceTrace = std::vector<std::vector<Var>>;  // [block][slot], T×T
using Targets = std::vector<std::vector<std::vector<int>>>;  // [task][slot][row]

/// 𝓜_{l,0} = Gram(β_{l,1}) (or I), 𝓜_{l,n} = SPDNet_l(𝓜_{l,n−1}, β_{l,n}).
MetricTrace metric_trace(const std::vector<std::vector<Var>>& betas, const std::vector<spd::SPDNetVars>& nets,
                         bool identity_init);

/// Pairwise squared functional distances per block and slot.
DistanceTrace distance_trace(const std::vector<std::vector<std::vector<Var>>>& alphas, const MetricTrace& metrics);
DistanceTrace distance_trace(const std::vector<seq::BlockTrace>& traces, const MetricTrace& metrics);

/// Σ_l Σ_n Σ_ij |𝒟_ij|.
Var regularizer(const DistanceTrace& distances);

struct PhiLoss {
  Var total;
  std::vector<Var> task_losses;  // ℓ_t: cross-entropy averaged over rows and slots
  Var regularizer;
};

/// Σ_t ℓ_t + λ·regularizer. With λ = 0 the total is Σ_t ℓ_t alone, so the
/// regularizer contributes nothing, not even rounding.
PhiLoss loss_phi(const std::vector<std::vector<Var>>& logits, const Targets& targets, const DistanceTrace& distances,
                 double lambda);

/// Σ_l Σ_n Σ_i [d²_{i,k_i} − log Σ_{j≠k_i} exp(d²_ij)] with k_i the task j ≠ i
/// farthest from i (smallest index on ties). Requires T ≥ 2.
Var loss_theta(const DistanceTrace& distances);

// --- Optimisation ---------------------------------------------------------

/// Thrown when a loss becomes non-finite. `diagnostics()` is a multi-line
/// report suitable for dumping to a file.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(const std::string& what, std::string diagnostics)
      : NumericalError(what), diagnostics_(std::move(diagnostics)) {}
  const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::string diagnostics_;
};

enum class Player { phi, theta };

/// First-order check of one update: ⟨∇𝓛(pre-step), Δ⟩.
struct StepCheck {
  std::size_t step = 0;
  Player player = Player::phi;
  double derivative = 0.0;
  bool passed() const noexcept { return player == Player::phi ? derivative <= 0.0 : derivative >= 0.0; }
};

struct InvariantReport {
  std::size_t metrics_checked = 0;
  std::size_t spd_violations = 0;
  double worst_min_eigenvalue = 0.0;  // smallest seen
  double worst_asymmetry = 0.0;
  std::size_t stiefel_checks = 0;
  std::size_t stiefel_violations = 0;
  double worst_orthogonality = 0.0;
  std::size_t checksum_violations = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;               // 1-based
  std::vector<double> task_loss;       // mean over batches of ℓ_t
  std::vector<double> task_accuracy;   // over all training slots of the epoch
  double reg_value = 0.0;              // mean over batches
  double ltheta_value = 0.0;           // mean over batches
  double wall_ms = 0.0;
};

class Trainer {
 public:
  Trainer(Model& model, const TrainConfig& config);

  EpochRecord train_epoch(const data::SequenceBatch& train);

  const std::vector<StepCheck>& checks() const noexcept { return checks_; }
  const InvariantReport& invariants() const noexcept { return invariants_; }
  std::size_t steps() const noexcept { return step_; }

 private:
  struct BatchStats {
    std::vector<double> task_loss;
    std::vector<std::size_t> correct;
    double reg = 0.0;
    double ltheta = 0.0;
  };
  BatchStats train_batch(const data::SequenceBatch& train, const std::vector<std::size_t>& rows);
  void check_metrics(const MetricTrace& metrics);
  std::string parameter_report() const;

  Model& model_;
  TrainConfig config_;
  std::vector<Parameter*> phi_;
  std::vector<Parameter*> theta_;
  std::vector<Tensor> adam_m_, adam_v_;
  std::size_t adam_t_ = 0;
  Rng shuffle_rng_;
  std::size_t step_ = 0;
  std::size_t epoch_ = 0;
  std::vector<StepCheck> checks_;
  InvariantReport invariants_;
};

/// Order-sensitive hash of every scalar's bit pattern.
std::uint64_t checksum(const std::vector<Parameter*>& params);

// --- Evaluation -----------------------------------------------------------

struct EvalResult {
  std::vector<double> task_loss;      // mean cross-entropy over all rows and slots
  std::vector<double> task_accuracy;
  std::vector<std::vector<int>> predictions;  // [task][seq·N + slot], argmax with smallest index on ties
  double mean_loss() const;
};

/// Forward only; parameters are bound as constants.
EvalResult evaluate(Model& model, const data::SequenceBatch& data, std::size_t batch_size = 64);

/// Builds the per-slot input matrices and targets for the given sequences.
std::vector<Tensor> slot_inputs(const data::SequenceBatch& data, const std::vector<std::size_t>& rows);
Targets slot_targets(const data::SequenceBatch& data, const std::vector<std::size_t>& rows);

/// Per block and slot: the distance matrix and the metric's condition number.
struct SlotAnalysis {
  std::size_t block = 0;
  std::size_t slot = 0;
  Tensor distances;  // T×T
  double metric_condition = 0.0;
};

/// β and α do not depend on the input, so one sequence suffices.
std::vector<SlotAnalysis> analyze(Model& model, const data::SequenceBatch& data);

}  // namespace htan::train
