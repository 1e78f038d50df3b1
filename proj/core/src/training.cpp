#include "htan/training.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "htan/apl.hpp"

namespace htan::train {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  const auto& m = model;
  if (m.tasks < 1 || m.blocks < 1 || m.basis < 1 || m.input_size < 1 || m.hidden_size < 1 || m.aux_hidden < 1 ||
      m.classes < 1) {
    fail("model sizes must be >= 1");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda must be a finite value >= 0");
  if (!(lr_phi > 0.0) || !(lr_theta > 0.0) || !std::isfinite(lr_phi) || !std::isfinite(lr_theta)) {
    fail("learning rates must be positive");
  }
  if (epochs < 1 || batch_size < 1) fail("epochs and batch_size must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0)) {
    fail("adam moments must lie in [0, 1) and eps must be positive");
  }
}

// --- Model ----------------------------------------------------------------

namespace {

seq::HtanParams make_htan(const TrainConfig& config) {
  config.validate();
  Rng rng(config.seed);
  return seq::HtanParams(config.model, rng);
}

constexpr const char* kMetaShape = "meta.shape";

}  // namespace

Model::Model(const TrainConfig& config) : config_(config), htan_(make_htan(config)) {
  Rng rng(config.seed + 1);
  for (std::size_t l = 0; l < config.model.blocks; ++l) {
    spdnets_.emplace_back(config.model.basis, config.spd_layers, rng, "block" + std::to_string(l) + ".spd");
  }
}

void Model::for_each_phi(const std::function<void(Parameter&)>& fn) { htan_.for_each(fn); }

void Model::for_each_theta(const std::function<void(Parameter&)>& fn) {
  for (auto& net : spdnets_) net.for_each(fn);
}

TensorBundle Model::state() {
  const auto& m = config_.model;
  TensorBundle bundle;
  bundle.push_back({kMetaShape, Tensor::vector({static_cast<double>(m.tasks), static_cast<double>(m.blocks),
                                                static_cast<double>(m.basis), static_cast<double>(m.input_size),
                                                static_cast<double>(m.hidden_size), static_cast<double>(m.aux_hidden),
                                                static_cast<double>(m.classes),
                                                m.encoder == seq::EncoderKind::attention ? 1.0 : 0.0,
                                                static_cast<double>(config_.spd_layers),
                                                config_.spd_identity_init ? 1.0 : 0.0})});
  auto add = [&bundle](Parameter& p) { bundle.push_back({p.name, p.value}); };
  for_each_phi(add);
  for_each_theta(add);
  return bundle;
}

void Model::load_state(const TensorBundle& bundle) {
  auto load = [&bundle](Parameter& p) {
    const Tensor& t = find_tensor(bundle, p.name);
    if (t.shape() != p.value.shape()) {
      throw FormatError("tensor '" + p.name + "' has shape " + shape_to_string(t.shape()) + ", expected " +
                        shape_to_string(p.value.shape()));
    }
    p.value = t;
    p.zero_grad();
  };
  for_each_phi(load);
  for_each_theta(load);
}

void save_model(const std::filesystem::path& path, Model& model) { save_container(path, model.state()); }

Model load_model(const std::filesystem::path& path) {
  const TensorBundle bundle = load_container(path);
  const Tensor& meta = find_tensor(bundle, kMetaShape);
  static const char* fields[] = {"tasks",  "blocks",  "basis",   "input_size", "hidden_size",
                                 "aux_hidden", "classes", "encoder", "spd_layers", "spd_init"};
  if (meta.rank() != 1 || meta.size() != std::size(fields)) throw FormatError("meta.shape has the wrong length");
  for (std::size_t i = 0; i < meta.size(); ++i) {
    if (!(meta[i] >= 0.0) || meta[i] != std::floor(meta[i]) || meta[i] > 1e9) {
      throw FormatError(std::string("meta.shape field '") + fields[i] + "' is not a valid count");
    }
  }
  TrainConfig cfg;
  cfg.model.tasks = static_cast<std::size_t>(meta[0]);
  cfg.model.blocks = static_cast<std::size_t>(meta[1]);
  cfg.model.basis = static_cast<std::size_t>(meta[2]);
  cfg.model.input_size = static_cast<std::size_t>(meta[3]);
  cfg.model.hidden_size = static_cast<std::size_t>(meta[4]);
  cfg.model.aux_hidden = static_cast<std::size_t>(meta[5]);
  cfg.model.classes = static_cast<std::size_t>(meta[6]);
  cfg.model.encoder = meta[7] == 1.0 ? seq::EncoderKind::attention : seq::EncoderKind::lstm;
  cfg.spd_layers = static_cast<std::size_t>(meta[8]);
  cfg.spd_identity_init = meta[9] == 1.0;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint shape: ") + e.what());
  }
  Model model(cfg);
  model.load_state(bundle);
  return model;
}

// --- Objectives -----------------------------------------------------------

MetricTrace metric_trace(const std::vector<std::vector<Var>>& betas, const std::vector<spd::SPDNetVars>& nets,
                         bool identity_init) {
  if (betas.size() != nets.size()) {
    throw ShapeError("metric_trace: " + std::to_string(betas.size()) + " blocks of β but " +
                     std::to_string(nets.size()) + " SPDNets");
  }
  MetricTrace out(betas.size());
  for (std::size_t l = 0; l < betas.size(); ++l) {
    if (betas[l].empty()) throw ShapeError("metric_trace: block " + std::to_string(l) + " has no slots");
    const Var& b1 = betas[l].front();
    Var m = identity_init ? b1.tape().constant(Tensor::identity(b1.value().size())) : apl::gaussian_gram(b1);
    for (const auto& beta : betas[l]) {
      m = spd::spdnet_step(m, beta, nets[l]);
      out[l].push_back(m);
    }
  }
  return out;
}

DistanceTrace distance_trace(const std::vector<std::vector<std::vector<Var>>>& alphas, const MetricTrace& metrics) {
  if (alphas.size() != metrics.size()) throw ShapeError("distance_trace: traces and metrics cover different blocks");
  DistanceTrace out(alphas.size());
  for (std::size_t l = 0; l < alphas.size(); ++l) {
    if (alphas[l].size() != metrics[l].size()) {
      throw ShapeError("distance_trace: block " + std::to_string(l) + " has " + std::to_string(alphas[l].size()) +
                       " slots of α but " + std::to_string(metrics[l].size()) + " metrics");
    }
    for (std::size_t n = 0; n < alphas[l].size(); ++n) out[l].push_back(apl::distance_matrix(alphas[l][n], metrics[l][n]));
  }
  return out;
}

DistanceTrace distance_trace(const std::vector<seq::BlockTrace>& traces, const MetricTrace& metrics) {
  std::vector<std::vector<std::vector<Var>>> alphas;
  for (const auto& t : traces) alphas.push_back(t.alpha);
  return distance_trace(alphas, metrics);
}

Var regularizer(const DistanceTrace& distances) {
  Var total;
  for (const auto& block : distances) {
    for (const auto& d : block) {
      Var s = sum(abs(d));
      total = total.valid() ? total + s : s;
    }
  }
  if (!total.valid()) throw ShapeError("regularizer: empty distance trace");
  return total;
}

PhiLoss loss_phi(const std::vector<std::vector<Var>>& logits, const Targets& targets, const DistanceTrace& distances,
                 double lambda) {
  if (logits.empty() || logits.size() != targets.size()) {
    throw ShapeError("loss_phi: " + std::to_string(logits.size()) + " tasks of logits but " +
                     std::to_string(targets.size()) + " of targets");
  }
  if (!(lambda >= 0.0)) throw std::invalid_argument("loss_phi: lambda must be >= 0");
  PhiLoss out;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    if (logits[t].empty() || logits[t].size() != targets[t].size()) {
      throw ShapeError("loss_phi: task " + std::to_string(t) + " logits and targets cover different slots");
    }
    Var acc = softmax_cross_entropy(logits[t][0], targets[t][0]);
    for (std::size_t n = 1; n < logits[t].size(); ++n) acc = acc + softmax_cross_entropy(logits[t][n], targets[t][n]);
    out.task_losses.push_back(scale(acc, 1.0 / static_cast<double>(logits[t].size())));
  }
  out.total = out.task_losses[0];
  for (std::size_t t = 1; t < out.task_losses.size(); ++t) out.total = out.total + out.task_losses[t];
  out.regularizer = regularizer(distances);
  if (lambda > 0.0) out.total = out.total + scale(out.regularizer, lambda);
  return out;
}

Var loss_theta(const DistanceTrace& distances) {
  Var total;
  for (const auto& block : distances) {
    for (const auto& d : block) {
      const Tensor dv = d.value();
      const auto t = dv.rows();
      if (dv.rank() != 2 || dv.cols() != t) throw ShapeError("loss_theta: distance matrices must be square");
      if (t < 2) throw std::invalid_argument("loss_theta: needs at least two tasks (farthest task undefined for T = 1)");
      for (std::size_t i = 0; i < t; ++i) {
        std::size_t k = i == 0 ? 1 : 0;
        for (std::size_t j = 0; j < t; ++j) {
          if (j != i && dv.at(i, j) > dv.at(i, k)) k = j;
        }
        std::vector<std::size_t> rest;
        for (std::size_t j = 0; j < t; ++j) {
          if (j != k) rest.push_back(i * t + j);
        }
        Var term = gather(d, {i * t + k}) - logsumexp(gather(d, rest));
        total = total.valid() ? total + term : term;
      }
    }
  }
  if (!total.valid()) throw ShapeError("loss_theta: empty distance trace");
  return total;
}

// --- Training -------------------------------------------------------------

std::uint64_t checksum(const std::vector<Parameter*>& params) {
  std::uint64_t h = 1469598103934665603ull;
  for (const Parameter* p : params) {
    for (double v : p->value.values()) {
      h ^= std::bit_cast<std::uint64_t>(v);
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::vector<Tensor> slot_inputs(const data::SequenceBatch& data, const std::vector<std::size_t>& rows) {
  std::vector<Tensor> out;
  out.reserve(data.seq_len);
  for (std::size_t n = 0; n < data.seq_len; ++n) {
    Tensor x({rows.size(), data.input_dim});
    for (std::size_t b = 0; b < rows.size(); ++b) {
      const auto src = data.input(rows[b], n);
      std::copy(src.begin(), src.end(), x.data() + b * data.input_dim);
    }
    out.push_back(std::move(x));
  }
  return out;
}

Targets slot_targets(const data::SequenceBatch& data, const std::vector<std::size_t>& rows) {
  Targets out(data.tasks, std::vector<std::vector<int>>(data.seq_len, std::vector<int>(rows.size())));
  for (std::size_t t = 0; t < data.tasks; ++t)
    for (std::size_t n = 0; n < data.seq_len; ++n)
      for (std::size_t b = 0; b < rows.size(); ++b) out[t][n][b] = data.label(t, rows[b], n);
  return out;
}

namespace {

void check_compatible(const TrainConfig& cfg, const data::SequenceBatch& data) {
  const auto& m = cfg.model;
  auto mismatch = [](const char* field, std::size_t model, std::size_t dataset) {
    throw ShapeError(std::string(field) + " mismatch: model " + std::to_string(model) + ", dataset " +
                     std::to_string(dataset));
  };
  if (data.input_dim != m.input_size) mismatch("input_dim", m.input_size, data.input_dim);
  if (data.tasks != m.tasks) mismatch("tasks", m.tasks, data.tasks);
  if (data.classes != m.classes) mismatch("classes", m.classes, data.classes);
  if (data.size() == 0 || data.seq_len == 0) throw std::invalid_argument("dataset is empty");
}

int argmax_row(const Tensor& logits, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.cols(); ++c) {
    if (logits.at(row, c) > logits.at(row, best)) best = c;
  }
  return static_cast<int>(best);
}

std::vector<Var> detached(Tape& tape, const std::vector<Var>& vars) {
  std::vector<Var> out;
  for (const auto& v : vars) out.push_back(tape.constant(v.value()));
  return out;
}

}  // namespace

Trainer::Trainer(Model& model, const TrainConfig& config)
    : model_(model), config_(config), shuffle_rng_(config.seed + 2) {
  config_.validate();
  config_.model = model.config().model;
  config_.spd_layers = model.config().spd_layers;
  model_.for_each_phi([this](Parameter& p) { phi_.push_back(&p); });
  model_.for_each_theta([this](Parameter& p) { theta_.push_back(&p); });
  for (const Parameter* p : phi_) {
    adam_m_.push_back(Tensor::zeros_like(p->value));
    adam_v_.push_back(Tensor::zeros_like(p->value));
  }
  invariants_.worst_min_eigenvalue = std::numeric_limits<double>::infinity();
}

void Trainer::check_metrics(const MetricTrace& metrics) {
  for (const auto& block : metrics) {
    for (const auto& m : block) {
      const auto r = spd::inspect(m.value());
      ++invariants_.metrics_checked;
      invariants_.worst_min_eigenvalue = std::min(invariants_.worst_min_eigenvalue, r.min_eigenvalue);
      invariants_.worst_asymmetry = std::max(invariants_.worst_asymmetry, r.asymmetry);
      if (r.min_eigenvalue < spd::kEigenFloor || r.asymmetry > 1e-10) ++invariants_.spd_violations;
    }
  }
}

std::string Trainer::parameter_report() const {
  std::ostringstream diag;
  for (const auto* ps : {&phi_, &theta_}) {
    for (const Parameter* p : *ps) {
      double mx = 0.0;
      bool finite = true;
      for (double v : p->value.values()) {
        finite = finite && std::isfinite(v);
        mx = std::max(mx, std::fabs(v));
      }
      diag << p->name << " max|x| = " << mx << (finite ? "" : " (non-finite)") << "\n";
    }
  }
  return diag.str();
}

Trainer::BatchStats Trainer::train_batch(const data::SequenceBatch& train, const std::vector<std::size_t>& rows) {
  const auto& mc = config_.model;
  const std::size_t tasks = mc.tasks;
  BatchStats stats;

  // Φ objective: HTAN trainable, SPDNets frozen.
  Tape tape;
  const seq::HtanVars hv = seq::bind(tape, model_.htan(), Binding::trainable);
  std::vector<spd::SPDNetVars> frozen_nets;
  for (auto& net : model_.spdnets()) frozen_nets.push_back(spd::bind(tape, net, Binding::frozen));
  std::vector<Var> inputs;
  for (auto& x : slot_inputs(train, rows)) inputs.push_back(tape.constant(std::move(x)));
  const seq::HtanOutput out = seq::htan_forward(hv, inputs);

  std::vector<std::vector<Var>> betas;
  for (const auto& tr : out.traces) betas.push_back(config_.detach_metric ? detached(tape, tr.beta) : tr.beta);
  const MetricTrace metrics = metric_trace(betas, frozen_nets, config_.spd_identity_init);
  check_metrics(metrics);
  const DistanceTrace distances = distance_trace(out.traces, metrics);
  const Targets targets = slot_targets(train, rows);
  const PhiLoss phi = loss_phi(out.logits, targets, distances, config_.lambda);

  for (std::size_t t = 0; t < tasks; ++t) {
    stats.task_loss.push_back(phi.task_losses[t].value().item());
    std::size_t correct = 0;
    for (std::size_t n = 0; n < train.seq_len; ++n) {
      const Tensor& lv = out.logits[t][n].value();
      for (std::size_t b = 0; b < rows.size(); ++b) correct += argmax_row(lv, b) == targets[t][n][b] ? 1 : 0;
    }
    stats.correct.push_back(correct);
  }
  stats.reg = phi.regularizer.value().item();

  auto abort_if_nonfinite = [&](double value, const char* what) {
    if (std::isfinite(value)) return;
    std::ostringstream diag;
    diag << "non-finite " << what << " at epoch " << epoch_ << ", step " << step_ << "\n";
    for (std::size_t t = 0; t < tasks; ++t) diag << "task_loss[" << t << "] = " << stats.task_loss[t] << "\n";
    diag << "regularizer = " << stats.reg << "\n";
    diag << parameter_report();
    throw TrainingAborted(std::string("training aborted: non-finite ") + what, diag.str());
  };
  abort_if_nonfinite(phi.total.value().item(), "HTAN loss");

  for (Parameter* p : phi_) p->zero_grad();
  for (Parameter* p : theta_) p->zero_grad();
  tape.backward(phi.total);

  // Θ objective on its own tape; β and α enter as the values just computed.
  const bool theta_step = tasks >= 2 && config_.theta_period > 0 && step_ % config_.theta_period == 0;
  if (tasks >= 2) {
    Tape ttape;
    std::vector<spd::SPDNetVars> nets;
    for (auto& net : model_.spdnets()) {
      nets.push_back(spd::bind(ttape, net, theta_step ? Binding::trainable : Binding::frozen));
    }
    std::vector<std::vector<Var>> tbetas;
    std::vector<std::vector<std::vector<Var>>> talphas;
    for (const auto& tr : out.traces) {
      tbetas.push_back(detached(ttape, tr.beta));
      auto& a = talphas.emplace_back();
      for (const auto& slot : tr.alpha) a.push_back(detached(ttape, slot));
    }
    const MetricTrace tmetrics = metric_trace(tbetas, nets, config_.spd_identity_init);
    const Var lt = loss_theta(distance_trace(talphas, tmetrics));
    stats.ltheta = lt.value().item();
    abort_if_nonfinite(stats.ltheta, "metric loss");
    if (theta_step) ttape.backward(lt);
  }

  // Φ update (Adam).
  const std::uint64_t theta_before = checksum(theta_);
  ++adam_t_;
  const double b1 = config_.adam_beta1, b2 = config_.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_t_));
  double phi_derivative = 0.0;
  for (std::size_t k = 0; k < phi_.size(); ++k) {
    Parameter& p = *phi_[k];
    auto& m = adam_m_[k];
    auto& v = adam_v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double before = p.value[i];
      p.value[i] -= config_.lr_phi * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.adam_eps);
      phi_derivative += g * (p.value[i] - before);
    }
  }
  if (checksum(theta_) != theta_before) ++invariants_.checksum_violations;
  checks_.push_back({step_, Player::phi, phi_derivative});

  // Θ update: Stiefel retraction for W, plain ascent otherwise.
  if (theta_step) {
    const std::uint64_t phi_before = checksum(phi_);
    double theta_derivative = 0.0;
    auto ascend = [&](Parameter& p, bool stiefel) {
      const Tensor before = p.value;
      if (stiefel) {
        p.value = spd::stiefel_step(p.value, p.grad, config_.lr_theta, spd::Direction::ascent);
        const double err = spd::orthogonality_error(p.value);
        ++invariants_.stiefel_checks;
        invariants_.worst_orthogonality = std::max(invariants_.worst_orthogonality, err);
        if (err >= spd::kStiefelTolerance) ++invariants_.stiefel_violations;
      } else {
        for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] += config_.lr_theta * p.grad[i];
      }
      for (std::size_t i = 0; i < p.value.size(); ++i) theta_derivative += p.grad[i] * (p.value[i] - before[i]);
    };
    for (auto& net : model_.spdnets()) {
      for (auto& layer : net.layers()) {
        ascend(layer.w, true);
        ascend(layer.v, false);
        ascend(layer.b, false);
        ascend(layer.q, false);
        ascend(layer.c, false);
      }
    }
    if (checksum(phi_) != phi_before) ++invariants_.checksum_violations;
    checks_.push_back({step_, Player::theta, theta_derivative});
  }
  ++step_;
  return stats;
}

EpochRecord Trainer::train_epoch(const data::SequenceBatch& train) {
  check_compatible(config_, train);
  const auto start = std::chrono::steady_clock::now();
  ++epoch_;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), shuffle_rng_);

  const std::size_t tasks = config_.model.tasks;
  EpochRecord rec;
  rec.epoch = epoch_;
  rec.task_loss.assign(tasks, 0.0);
  std::vector<std::size_t> correct(tasks, 0);
  std::size_t batches = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += config_.batch_size) {
    const std::size_t end = std::min(order.size(), begin + config_.batch_size);
    const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                        order.begin() + static_cast<std::ptrdiff_t>(end));
    // Diverged parameters usually surface as a domain or numerical error
    // inside the forward pass before any loss is formed.
    auto abort_with = [&](const std::exception& e) {
      std::ostringstream diag;
      diag << e.what() << " at epoch " << epoch_ << ", step " << step_ << "\n" << parameter_report();
      return TrainingAborted(std::string("training aborted: ") + e.what(), diag.str());
    };
    BatchStats s;
    try {
      s = train_batch(train, rows);
    } catch (const TrainingAborted&) {
      throw;
    } catch (const NumericalError& e) {
      throw abort_with(e);
    } catch (const DomainError& e) {
      throw abort_with(e);
    }
    for (std::size_t t = 0; t < tasks; ++t) {
      rec.task_loss[t] += s.task_loss[t];
      correct[t] += s.correct[t];
    }
    rec.reg_value += s.reg;
    rec.ltheta_value += s.ltheta;
    ++batches;
  }
  const double nb = static_cast<double>(batches);
  const double slots = static_cast<double>(train.size() * train.seq_len);
  for (std::size_t t = 0; t < tasks; ++t) {
    rec.task_loss[t] /= nb;
    rec.task_accuracy.push_back(static_cast<double>(correct[t]) / slots);
  }
  rec.reg_value /= nb;
  rec.ltheta_value /= nb;
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

// --- Evaluation -----------------------------------------------------------

double EvalResult::mean_loss() const {
  if (task_loss.empty()) return 0.0;
  return std::accumulate(task_loss.begin(), task_loss.end(), 0.0) / static_cast<double>(task_loss.size());
}

EvalResult evaluate(Model& model, const data::SequenceBatch& data, std::size_t batch_size) {
  check_compatible(model.config(), data);
  if (batch_size == 0) throw std::invalid_argument("evaluate: batch_size must be >= 1");
  const std::size_t tasks = data.tasks, n_seq = data.size(), slots = data.seq_len;
  EvalResult res;
  res.task_loss.assign(tasks, 0.0);
  res.task_accuracy.assign(tasks, 0.0);
  res.predictions.assign(tasks, std::vector<int>(n_seq * slots, 0));
  std::vector<std::size_t> correct(tasks, 0);

  for (std::size_t begin = 0; begin < n_seq; begin += batch_size) {
    std::vector<std::size_t> rows(std::min(batch_size, n_seq - begin));
    std::iota(rows.begin(), rows.end(), begin);
    Tape tape;
    const seq::HtanVars hv = seq::bind(tape, model.htan(), Binding::frozen);
    std::vector<Var> inputs;
    for (auto& x : slot_inputs(data, rows)) inputs.push_back(tape.constant(std::move(x)));
    const seq::HtanOutput out = seq::htan_forward(hv, inputs);
    const Targets targets = slot_targets(data, rows);
    for (std::size_t t = 0; t < tasks; ++t) {
      for (std::size_t n = 0; n < slots; ++n) {
        const double ce = softmax_cross_entropy(out.logits[t][n], targets[t][n]).value().item();
        res.task_loss[t] += ce * static_cast<double>(rows.size());
        const Tensor& lv = out.logits[t][n].value();
        for (std::size_t b = 0; b < rows.size(); ++b) {
          const int pred = argmax_row(lv, b);
          res.predictions[t][rows[b] * slots + n] = pred;
          correct[t] += pred == targets[t][n][b] ? 1 : 0;
        }
      }
    }
  }
  const double total = static_cast<double>(n_seq * slots);
  for (std::size_t t = 0; t < tasks; ++t) {
    res.task_loss[t] /= total;
    res.task_accuracy[t] = static_cast<double>(correct[t]) / total;
  }
  return res;
}

std::vector<SlotAnalysis> analyze(Model& model, const data::SequenceBatch& data) {
  check_compatible(model.config(), data);
  Tape tape;
  const seq::HtanVars hv = seq::bind(tape, model.htan(), Binding::frozen);
  std::vector<spd::SPDNetVars> nets;
  for (auto& net : model.spdnets()) nets.push_back(spd::bind(tape, net, Binding::frozen));
  std::vector<Var> inputs;
  for (auto& x : slot_inputs(data, {0})) inputs.push_back(tape.constant(std::move(x)));
  const seq::HtanOutput out = seq::htan_forward(hv, inputs);
  std::vector<std::vector<Var>> betas;
  for (const auto& tr : out.traces) betas.push_back(tr.beta);
  const MetricTrace metrics = metric_trace(betas, nets, model.config().spd_identity_init);
  const DistanceTrace distances = distance_trace(out.traces, metrics);
  std::vector<SlotAnalysis> rows;
  for (std::size_t l = 0; l < metrics.size(); ++l) {
    for (std::size_t n = 0; n < metrics[l].size(); ++n) {
      rows.push_back({l, n, distances[l][n].value(), spd::inspect(metrics[l][n].value()).condition()});
    }
  }
  return rows;
}

}  // namespace htan::train
