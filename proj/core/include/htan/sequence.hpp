#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "htan/ops.hpp"
#include "htan/random.hpp"
#include "htan/spd.hpp"

/// Recurrent building blocks of the hierarchical-temporal activation network.
///
/// Batched sequences are handled one time slot at a time: each slot is a
/// B×d matrix whose rows are the sequences of the batch.
namespace htan::seq {

/// LSTM cell with the four gates fused column-wise.
///
/// `weight` is (d_in + d_h) × 4·d_h: column block 0 is the input gate, 1 the
/// forget gate, 2 the output gate and 3 the candidate. Each block is the
/// transpose of the usual d_h × (d_in + d_h) gate matrix.
struct LSTMCellParams {
  LSTMCellParams() = default;
  /// Weights and biases uniform in ±1/√d_h.
  LSTMCellParams(std::size_t input_size, std::size_t hidden_size, Rng& rng, const std::string& prefix);
  static LSTMCellParams zeros(std::size_t input_size, std::size_t hidden_size, const std::string& prefix);

  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Parameter weight;
  Parameter bias;

  void for_each(const std::function<void(Parameter&)>& fn);
  std::size_t scalar_count() const { return weight.value.size() + bias.value.size(); }
};

/// Scalars in one LSTM cell: 4·(d_h·(d_in + d_h) + d_h).
std::size_t lstm_scalar_count(std::size_t input_size, std::size_t hidden_size);

struct LSTMVars {
  Var weight;
  Var bias;
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
};

LSTMVars bind(Tape& tape, LSTMCellParams& p, Binding how);

struct LSTMState {
  Var h;  // B×d_h
  Var c;  // B×d_h
};

/// One step of the standard LSTM recurrence; returns the new state.
LSTMState lstm_step(const LSTMVars& cell, Var x, const LSTMState& state);

/// Single-head causal scaled dot-product attention. Projections are
/// d_in × d_h (square when stacked on a d_h-wide block).
struct AttentionParams {
  AttentionParams() = default;
  AttentionParams(std::size_t input_size, std::size_t hidden_size, Rng& rng, const std::string& prefix);

  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Parameter query;
  Parameter key;
  Parameter value;

  void for_each(const std::function<void(Parameter&)>& fn);
  std::size_t scalar_count() const { return query.value.size() + key.value.size() + value.value.size(); }
};

struct AttentionVars {
  Var query, key, value;
  std::size_t hidden_size = 0;
};

AttentionVars bind(Tape& tape, AttentionParams& p, Binding how);

/// Keys and values of the positions seen so far.
struct AttentionCache {
  std::vector<Var> keys;
  std::vector<Var> values;
};

/// Attends from x_n over positions 1..n, appending x_n's key/value to `cache`.
Var attention_step(const AttentionVars& attn, Var x_n, AttentionCache& cache);
/// Same, with the history given as raw inputs x_1..x_{n−1}.
Var attention_step(const AttentionVars& attn, Var x_n, const std::vector<Var>& history);

enum class EncoderKind { lstm, attention };

struct BlockConfig {
  std::size_t input_size = 0;   // d_in of the shared encoder
  std::size_t hidden_size = 0;  // d_h
  std::size_t basis = 0;        // M
  std::size_t tasks = 0;        // T
  std::size_t aux_hidden = 0;   // hidden size of the β and α recurrences
  EncoderKind encoder = EncoderKind::lstm;
};

/// Parameters of one task-adaptive block: the shared encoder, the β
/// recurrence, the α recurrence (shared weights, per-task state) and the
/// per-task embeddings used as α₀.
struct TaskAdaptiveBlockParams {
  TaskAdaptiveBlockParams() = default;
  TaskAdaptiveBlockParams(const BlockConfig& config, Rng& rng, const std::string& prefix);

  BlockConfig config;
  LSTMCellParams encoder;
  std::optional<AttentionParams> attention;

  LSTMCellParams lstm_beta;
  Parameter beta_proj_w;  // aux_hidden × M
  Parameter beta_proj_b;  // M
  Parameter beta0;        // M, learned initial token
  Parameter beta_h0;      // aux_hidden
  Parameter beta_c0;      // aux_hidden

  LSTMCellParams lstm_alpha;  // input 2M
  Parameter alpha_proj_w;     // aux_hidden × M
  Parameter alpha_proj_b;     // M
  Parameter alpha_h0;         // aux_hidden
  Parameter alpha_c0;         // aux_hidden
  Parameter task_embeddings;  // T × M, row t is α^t_0

  void for_each(const std::function<void(Parameter&)>& fn);
  std::size_t scalar_count();
};

struct BlockVars {
  BlockConfig config;
  std::optional<LSTMVars> encoder;
  std::optional<AttentionVars> attention;
  LSTMVars lstm_beta;
  Var beta_proj_w, beta_proj_b, beta0, beta_h0, beta_c0;
  LSTMVars lstm_alpha;
  Var alpha_proj_w, alpha_proj_b, alpha_h0, alpha_c0;
  Var task_embeddings;
};

BlockVars bind(Tape& tape, TaskAdaptiveBlockParams& p, Binding how);

/// Everything one block computed over a sequence. Indexed [slot][...].
struct BlockTrace {
  std::vector<Var> beta;                     // N × (1×M)
  std::vector<std::vector<Var>> alpha;       // N × T × (1×M)
  std::vector<std::vector<Var>> pre;         // N × S × (B×d_h), S = number of input streams
  std::vector<std::vector<Var>> post;        // N × T × (B×d_h)

  std::size_t slots() const noexcept { return beta.size(); }
  std::size_t tasks() const noexcept { return alpha.empty() ? 0 : alpha.front().size(); }
};

/// Runs a block over N slots.
///
/// `streams` holds one input sequence (N × (B×d_in)) shared by every task, or
/// one per task; the shared encoder runs once per stream with the same
/// weights. Task t's output is APL(pre-activation of its stream, α^t_n, β_n).
BlockTrace block_forward(const BlockVars& block, const std::vector<std::vector<Var>>& streams);
/// Convenience overload for a single N×d_in sequence.
BlockTrace block_forward(const BlockVars& block, const Tensor& sequence);

struct HtanConfig {
  std::size_t tasks = 2;
  std::size_t blocks = 2;
  std::size_t basis = 8;
  std::size_t input_size = 8;
  std::size_t hidden_size = 64;
  std::size_t aux_hidden = 16;
  std::size_t classes = 3;  // per task
  EncoderKind encoder = EncoderKind::lstm;
};

struct HeadParams {
  Parameter weight;  // d_h × C
  Parameter bias;    // C
};

/// L stacked blocks plus one linear classifier per task.
class HtanParams {
 public:
  HtanParams() = default;
  HtanParams(const HtanConfig& config, Rng& rng);

  const HtanConfig& config() const noexcept { return config_; }
  std::vector<TaskAdaptiveBlockParams>& blocks() noexcept { return blocks_; }
  std::vector<HeadParams>& heads() noexcept { return heads_; }

  void for_each(const std::function<void(Parameter&)>& fn);
  std::size_t scalar_count();

 private:
  HtanConfig config_;
  std::vector<TaskAdaptiveBlockParams> blocks_;
  std::vector<HeadParams> heads_;
};

struct HtanVars {
  std::vector<BlockVars> blocks;
  std::vector<std::pair<Var, Var>> heads;
};

HtanVars bind(Tape& tape, HtanParams& p, Binding how);

struct HtanOutput {
  std::vector<std::vector<Var>> logits;  // T × N × (B×C)
  std::vector<BlockTrace> traces;        // L
};

/// Full forward pass over N slots of B×d_in inputs.
HtanOutput htan_forward(const HtanVars& net, const std::vector<Var>& inputs);

/// Learnable-scalar census of HTAN-SPD against a soft-sharing baseline made of
/// T task-specific stacks plus one shared stack of the same depth and width,
/// whose heads read the concatenated private and shared features.
struct ParameterCount {
  std::size_t htan_encoders = 0;
  std::size_t htan_aux = 0;  // β and α recurrences incl. projections and learned initial states
  std::size_t htan_embeddings = 0;
  std::size_t htan_heads = 0;
  std::size_t htan_spdnets = 0;
  std::size_t htan_total = 0;
  std::size_t baseline_encoders = 0;
  std::size_t baseline_heads = 0;
  std::size_t baseline_total = 0;
};

ParameterCount parameter_count(const HtanConfig& config, std::size_t spd_layers);
/// Smallest T in [1, max_tasks] from which HTAN is smaller than the baseline
/// for every larger T up to max_tasks; nullopt if none.
std::optional<std::size_t> parameter_crossover(HtanConfig config, std::size_t spd_layers, std::size_t max_tasks = 64);

}  // namespace htan::seq
