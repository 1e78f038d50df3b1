#include "htan/sequence.hpp"

#include <cmath>

#include "htan/apl.hpp"
#include "htan/errors.hpp"

namespace htan::seq {

namespace {

Tensor uniform_init(Shape shape, std::size_t fan, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan));
  return uniform_tensor(std::move(shape), -bound, bound, rng);
}

Var zeros(Tape& tape, std::size_t rows, std::size_t cols) { return tape.constant(Tensor({rows, cols}, 0.0)); }

}  // namespace

// --- LSTM -----------------------------------------------------------------

LSTMCellParams::LSTMCellParams(std::size_t in, std::size_t hidden, Rng& rng, const std::string& prefix)
    : input_size(in), hidden_size(hidden) {
  if (in == 0 || hidden == 0) throw ShapeError("LSTMCellParams: sizes must be positive");
  weight = Parameter(prefix + ".weight", uniform_init({in + hidden, 4 * hidden}, hidden, rng));
  bias = Parameter(prefix + ".bias", uniform_init({4 * hidden}, hidden, rng));
}

LSTMCellParams LSTMCellParams::zeros(std::size_t in, std::size_t hidden, const std::string& prefix) {
  LSTMCellParams p;
  p.input_size = in;
  p.hidden_size = hidden;
  p.weight = Parameter(prefix + ".weight", Tensor({in + hidden, 4 * hidden}, 0.0));
  p.bias = Parameter(prefix + ".bias", Tensor({4 * hidden}, 0.0));
  return p;
}

void LSTMCellParams::for_each(const std::function<void(Parameter&)>& fn) {
  fn(weight);
  fn(bias);
}

std::size_t lstm_scalar_count(std::size_t in, std::size_t hidden) { return 4 * (hidden * (in + hidden) + hidden); }

LSTMVars bind(Tape& tape, LSTMCellParams& p, Binding how) {
  return {htan::bind(tape, p.weight, how), as_matrix(htan::bind(tape, p.bias, how)), p.input_size, p.hidden_size};
}

LSTMState lstm_step(const LSTMVars& cell, Var x, const LSTMState& state) {
  const Tensor& xv = x.value();
  const auto d = cell.hidden_size;
  if (xv.rank() != 2 || xv.cols() != cell.input_size || state.h.value().rank() != 2 ||
      state.h.value().cols() != d || state.h.value().rows() != xv.rows() || !state.c.value().same_shape(state.h.value())) {
    throw ShapeError("lstm_step: input " + shape_to_string(xv.shape()) + " / state " +
                     shape_to_string(state.h.shape()) + " incompatible with cell (" + std::to_string(cell.input_size) +
                     " -> " + std::to_string(d) + ")");
  }
  Var z = add_rowvec(matmul(concat({x, state.h}), cell.weight), cell.bias);
  Var in_gate = sigmoid(slice_cols(z, 0, d));
  Var forget_gate = sigmoid(slice_cols(z, d, d));
  Var out_gate = sigmoid(slice_cols(z, 2 * d, d));
  Var candidate = tanh(slice_cols(z, 3 * d, d));
  Var c = forget_gate * state.c + in_gate * candidate;
  Var h = out_gate * tanh(c);
  return {h, c};
}

// --- Attention ------------------------------------------------------------

AttentionParams::AttentionParams(std::size_t in, std::size_t hidden, Rng& rng, const std::string& prefix)
    : input_size(in), hidden_size(hidden) {
  query = Parameter(prefix + ".query", uniform_init({in, hidden}, in, rng));
  key = Parameter(prefix + ".key", uniform_init({in, hidden}, in, rng));
  value = Parameter(prefix + ".value", uniform_init({in, hidden}, in, rng));
}

void AttentionParams::for_each(const std::function<void(Parameter&)>& fn) {
  fn(query);
  fn(key);
  fn(value);
}

AttentionVars bind(Tape& tape, AttentionParams& p, Binding how) {
  return {htan::bind(tape, p.query, how), htan::bind(tape, p.key, how), htan::bind(tape, p.value, how),
          p.hidden_size};
}

Var attention_step(const AttentionVars& attn, Var x_n, AttentionCache& cache) {
  const Tensor& xv = x_n.value();
  if (xv.rank() != 2 || xv.cols() != attn.query.value().rows()) {
    throw ShapeError("attention_step: input " + shape_to_string(xv.shape()) + " does not match projections " +
                     shape_to_string(attn.query.shape()));
  }
  if (!cache.keys.empty() && cache.keys.front().value().rows() != xv.rows()) {
    throw ShapeError("attention_step: batch size differs from cached history");
  }
  cache.keys.push_back(matmul(x_n, attn.key));
  cache.values.push_back(matmul(x_n, attn.value));
  Var q = matmul(x_n, attn.query);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(attn.hidden_size));
  std::vector<Var> scores;
  scores.reserve(cache.keys.size());
  for (const auto& k : cache.keys) scores.push_back(scale(sum_rows(q * k), inv_sqrt));
  Var weights = softmax(concat(scores));
  Var out = mul_colvec(cache.values[0], slice_cols(weights, 0, 1));
  for (std::size_t j = 1; j < cache.values.size(); ++j) {
    out = out + mul_colvec(cache.values[j], slice_cols(weights, j, 1));
  }
  return out;
}

Var attention_step(const AttentionVars& attn, Var x_n, const std::vector<Var>& history) {
  AttentionCache cache;
  for (const auto& h : history) {
    if (h.value().rank() != 2 || h.value().cols() != attn.query.value().rows()) {
      throw ShapeError("attention_step: history entry " + shape_to_string(h.shape()) + " has the wrong width");
    }
    cache.keys.push_back(matmul(h, attn.key));
    cache.values.push_back(matmul(h, attn.value));
  }
  return attention_step(attn, x_n, cache);
}

// --- Task-adaptive block --------------------------------------------------

TaskAdaptiveBlockParams::TaskAdaptiveBlockParams(const BlockConfig& cfg, Rng& rng, const std::string& prefix)
    : config(cfg) {
  if (cfg.input_size == 0 || cfg.hidden_size == 0 || cfg.basis == 0 || cfg.tasks == 0 || cfg.aux_hidden == 0) {
    throw ShapeError("TaskAdaptiveBlockParams: all sizes must be positive");
  }
  const auto m = cfg.basis, ha = cfg.aux_hidden;
  if (cfg.encoder == EncoderKind::lstm) {
    encoder = LSTMCellParams(cfg.input_size, cfg.hidden_size, rng, prefix + ".encoder");
  } else {
    attention = AttentionParams(cfg.input_size, cfg.hidden_size, rng, prefix + ".attention");
  }
  lstm_beta = LSTMCellParams(m, ha, rng, prefix + ".lstm_beta");
  beta_proj_w = Parameter(prefix + ".beta_proj.weight", uniform_init({ha, m}, ha, rng));
  beta_proj_b = Parameter(prefix + ".beta_proj.bias", Tensor({m}, 0.0));
  std::vector<double> spaced(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) spaced[i] = m == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(m - 1);
  beta0 = Parameter(prefix + ".beta0", Tensor::vector(spaced));
  beta_h0 = Parameter(prefix + ".beta_h0", Tensor({ha}, 0.0));
  beta_c0 = Parameter(prefix + ".beta_c0", Tensor({ha}, 0.0));

  lstm_alpha = LSTMCellParams(2 * m, ha, rng, prefix + ".lstm_alpha");
  alpha_proj_w = Parameter(prefix + ".alpha_proj.weight", uniform_init({ha, m}, ha, rng));
  alpha_proj_b = Parameter(prefix + ".alpha_proj.bias", Tensor({m}, 0.0));
  alpha_h0 = Parameter(prefix + ".alpha_h0", Tensor({ha}, 0.0));
  alpha_c0 = Parameter(prefix + ".alpha_c0", Tensor({ha}, 0.0));
  task_embeddings = Parameter(prefix + ".task_embeddings", uniform_tensor({cfg.tasks, m}, -0.1, 0.1, rng));
}

void TaskAdaptiveBlockParams::for_each(const std::function<void(Parameter&)>& fn) {
  if (attention) {
    attention->for_each(fn);
  } else {
    encoder.for_each(fn);
  }
  lstm_beta.for_each(fn);
  fn(beta_proj_w);
  fn(beta_proj_b);
  fn(beta0);
  fn(beta_h0);
  fn(beta_c0);
  lstm_alpha.for_each(fn);
  fn(alpha_proj_w);
  fn(alpha_proj_b);
  fn(alpha_h0);
  fn(alpha_c0);
  fn(task_embeddings);
}

std::size_t TaskAdaptiveBlockParams::scalar_count() {
  std::size_t n = 0;
  for_each([&n](Parameter& p) { n += p.value.size(); });
  return n;
}

BlockVars bind(Tape& tape, TaskAdaptiveBlockParams& p, Binding how) {
  BlockVars v;
  v.config = p.config;
  if (p.attention) {
    v.attention = bind(tape, *p.attention, how);
  } else {
    v.encoder = bind(tape, p.encoder, how);
  }
  v.lstm_beta = bind(tape, p.lstm_beta, how);
  v.beta_proj_w = htan::bind(tape, p.beta_proj_w, how);
  v.beta_proj_b = as_matrix(htan::bind(tape, p.beta_proj_b, how));
  v.beta0 = as_matrix(htan::bind(tape, p.beta0, how));
  v.beta_h0 = as_matrix(htan::bind(tape, p.beta_h0, how));
  v.beta_c0 = as_matrix(htan::bind(tape, p.beta_c0, how));
  v.lstm_alpha = bind(tape, p.lstm_alpha, how);
  v.alpha_proj_w = htan::bind(tape, p.alpha_proj_w, how);
  v.alpha_proj_b = as_matrix(htan::bind(tape, p.alpha_proj_b, how));
  v.alpha_h0 = as_matrix(htan::bind(tape, p.alpha_h0, how));
  v.alpha_c0 = as_matrix(htan::bind(tape, p.alpha_c0, how));
  v.task_embeddings = htan::bind(tape, p.task_embeddings, how);
  return v;
}

BlockTrace block_forward(const BlockVars& block, const std::vector<std::vector<Var>>& streams) {
  const auto& cfg = block.config;
  if (streams.empty() || streams.front().empty()) throw ShapeError("block_forward: empty sequence");
  if (streams.size() != 1 && streams.size() != cfg.tasks) {
    throw ShapeError("block_forward: expected 1 or " + std::to_string(cfg.tasks) + " input streams, got " +
                     std::to_string(streams.size()));
  }
  const std::size_t slots = streams.front().size();
  for (const auto& s : streams) {
    if (s.size() != slots) throw ShapeError("block_forward: input streams differ in length");
  }
  const std::size_t batch = streams.front().front().value().rows();
  Tape& tape = block.task_embeddings.tape();

  BlockTrace trace;
  trace.beta.reserve(slots);

  std::vector<LSTMState> enc_state;
  std::vector<AttentionCache> caches(streams.size());
  for (std::size_t s = 0; s < streams.size(); ++s) {
    enc_state.push_back({zeros(tape, batch, cfg.hidden_size), zeros(tape, batch, cfg.hidden_size)});
  }

  LSTMState beta_state{block.beta_h0, block.beta_c0};
  Var prev_beta = block.beta0;
  std::vector<LSTMState> alpha_state(cfg.tasks, LSTMState{block.alpha_h0, block.alpha_c0});
  std::vector<Var> prev_alpha;
  for (std::size_t t = 0; t < cfg.tasks; ++t) prev_alpha.push_back(slice_rows(block.task_embeddings, t, 1));

  for (std::size_t n = 0; n < slots; ++n) {
    std::vector<Var> pre;
    for (std::size_t s = 0; s < streams.size(); ++s) {
      Var x = streams[s][n];
      if (x.value().rank() != 2 || x.value().cols() != cfg.input_size || x.value().rows() != batch) {
        throw ShapeError("block_forward: slot input " + shape_to_string(x.shape()) + " does not match d_in " +
                         std::to_string(cfg.input_size));
      }
      if (block.encoder) {
        enc_state[s] = lstm_step(*block.encoder, x, enc_state[s]);
        pre.push_back(enc_state[s].h);
      } else {
        pre.push_back(attention_step(*block.attention, x, caches[s]));
      }
    }

    beta_state = lstm_step(block.lstm_beta, prev_beta, beta_state);
    Var beta = add(matmul(beta_state.h, block.beta_proj_w), block.beta_proj_b);
    prev_beta = beta;

    std::vector<Var> alphas;
    std::vector<Var> post;
    for (std::size_t t = 0; t < cfg.tasks; ++t) {
      alpha_state[t] = lstm_step(block.lstm_alpha, concat({prev_alpha[t], beta}), alpha_state[t]);
      Var alpha = add(matmul(alpha_state[t].h, block.alpha_proj_w), block.alpha_proj_b);
      prev_alpha[t] = alpha;
      alphas.push_back(alpha);
      post.push_back(apl::apl_apply(pre[streams.size() == 1 ? 0 : t], alpha, beta));
    }
    trace.beta.push_back(beta);
    trace.alpha.push_back(std::move(alphas));
    trace.pre.push_back(std::move(pre));
    trace.post.push_back(std::move(post));
  }
  return trace;
}

BlockTrace block_forward(const BlockVars& block, const Tensor& sequence) {
  if (sequence.rank() != 2) throw ShapeError("block_forward: sequence must be N×d_in");
  Tape& tape = block.task_embeddings.tape();
  std::vector<Var> inputs;
  for (std::size_t n = 0; n < sequence.rows(); ++n) {
    std::vector<double> row(sequence.data() + n * sequence.cols(), sequence.data() + (n + 1) * sequence.cols());
    inputs.push_back(tape.constant(Tensor::row(std::move(row))));
  }
  return block_forward(block, std::vector<std::vector<Var>>{inputs});
}

// --- Full network ---------------------------------------------------------

HtanParams::HtanParams(const HtanConfig& config, Rng& rng) : config_(config) {
  if (config.tasks == 0 || config.blocks == 0 || config.basis == 0 || config.input_size == 0 ||
      config.hidden_size == 0 || config.aux_hidden == 0 || config.classes == 0) {
    throw ShapeError("HtanParams: all sizes must be positive");
  }
  for (std::size_t l = 0; l < config.blocks; ++l) {
    BlockConfig bc;
    bc.input_size = l == 0 ? config.input_size : config.hidden_size;
    bc.hidden_size = config.hidden_size;
    bc.basis = config.basis;
    bc.tasks = config.tasks;
    bc.aux_hidden = config.aux_hidden;
    bc.encoder = config.encoder;
    blocks_.emplace_back(bc, rng, "block" + std::to_string(l));
  }
  for (std::size_t t = 0; t < config.tasks; ++t) {
    const std::string p = "head" + std::to_string(t);
    heads_.push_back({Parameter(p + ".weight", uniform_init({config.hidden_size, config.classes}, config.hidden_size, rng)),
                      Parameter(p + ".bias", Tensor({config.classes}, 0.0))});
  }
}

void HtanParams::for_each(const std::function<void(Parameter&)>& fn) {
  for (auto& b : blocks_) b.for_each(fn);
  for (auto& h : heads_) {
    fn(h.weight);
    fn(h.bias);
  }
}

std::size_t HtanParams::scalar_count() {
  std::size_t n = 0;
  for_each([&n](Parameter& p) { n += p.value.size(); });
  return n;
}

HtanVars bind(Tape& tape, HtanParams& p, Binding how) {
  HtanVars v;
  for (auto& b : p.blocks()) v.blocks.push_back(bind(tape, b, how));
  for (auto& h : p.heads()) v.heads.emplace_back(htan::bind(tape, h.weight, how), as_matrix(htan::bind(tape, h.bias, how)));
  return v;
}

HtanOutput htan_forward(const HtanVars& net, const std::vector<Var>& inputs) {
  if (inputs.empty()) throw ShapeError("htan_forward: empty sequence");
  HtanOutput out;
  std::vector<std::vector<Var>> streams{inputs};
  for (const auto& block : net.blocks) {
    out.traces.push_back(block_forward(block, streams));
    const auto& trace = out.traces.back();
    streams.assign(block.config.tasks, {});
    for (std::size_t n = 0; n < trace.slots(); ++n) {
      for (std::size_t t = 0; t < block.config.tasks; ++t) streams[t].push_back(trace.post[n][t]);
    }
  }
  out.logits.resize(net.heads.size());
  for (std::size_t t = 0; t < net.heads.size(); ++t) {
    const auto& [w, b] = net.heads[t];
    for (const auto& h : streams[t]) out.logits[t].push_back(add_rowvec(matmul(h, w), b));
  }
  return out;
}

ParameterCount parameter_count(const HtanConfig& c, std::size_t spd_layers) {
  ParameterCount pc;
  const auto m = c.basis, ha = c.aux_hidden;
  std::size_t stack = 0;
  for (std::size_t l = 0; l < c.blocks; ++l) {
    const auto in = l == 0 ? c.input_size : c.hidden_size;
    stack += c.encoder == EncoderKind::lstm ? lstm_scalar_count(in, c.hidden_size) : 3 * in * c.hidden_size;
  }
  const std::size_t aux_per_block = lstm_scalar_count(m, ha) + ha * m + m + m + 2 * ha +  // β recurrence
                                    lstm_scalar_count(2 * m, ha) + ha * m + m + 2 * ha;   // α recurrence
  pc.htan_encoders = stack;
  pc.htan_aux = c.blocks * aux_per_block;
  pc.htan_embeddings = c.blocks * c.tasks * m;
  pc.htan_heads = c.tasks * (c.hidden_size * c.classes + c.classes);
  pc.htan_spdnets = c.blocks * spd_layers * (3 * m * m + 2 * m);
  pc.htan_total = pc.htan_encoders + pc.htan_aux + pc.htan_embeddings + pc.htan_heads + pc.htan_spdnets;

  std::size_t lstm_stack = 0;
  for (std::size_t l = 0; l < c.blocks; ++l) {
    lstm_stack += lstm_scalar_count(l == 0 ? c.input_size : c.hidden_size, c.hidden_size);
  }
  pc.baseline_encoders = (c.tasks + 1) * lstm_stack;
  pc.baseline_heads = c.tasks * (2 * c.hidden_size * c.classes + c.classes);
  pc.baseline_total = pc.baseline_encoders + pc.baseline_heads;
  return pc;
}

std::optional<std::size_t> parameter_crossover(HtanConfig config, std::size_t spd_layers, std::size_t max_tasks) {
  std::optional<std::size_t> crossover;
  for (std::size_t t = max_tasks; t >= 1; --t) {
    config.tasks = t;
    const auto pc = parameter_count(config, spd_layers);
    if (pc.htan_total < pc.baseline_total) {
      crossover = t;
    } else {
      break;
    }
  }
  return crossover;
}

}  // namespace htan::seq
