// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criteria 2, 5, 6 and 7 share ten default training runs
// (five seeds, λ = 0.01 and the λ = 0 ablation).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "htan/apl.hpp"
#include "htan/sequence.hpp"
#include "htan/spd.hpp"
#include "htan/synthetic.hpp"
#include "htan/training.hpp"
#include "htan_cli/commands.hpp"
#include "support/gradcheck.hpp"

using namespace htan;
namespace fs = std::filesystem;
using htan::testing::gradcheck;
using htan::testing::param_gradcheck;
using htan::testing::weighted_sum;

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kFdTolerance = 1e-4;
constexpr int kFdInstances = 20;
const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

int failures = 0;

void report(int id, bool ok, const std::string& title, const std::string& detail) {
  if (!ok) ++failures;
  std::printf("criterion %d %s  %s: %s\n", id, ok ? "PASS" : "FAIL", title.c_str(), detail.c_str());
  std::fflush(stdout);
}

void note(const std::string& text) {
  std::printf("  %s\n", text.c_str());
  std::fflush(stdout);
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream ss;
  ss.precision(precision);
  ss << v;
  return ss.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Tensor random_spd(std::size_t m, Rng& rng) {
  const Tensor a = uniform_tensor({m, m}, -1, 1, rng);
  Tensor s = kernels::matmul_nt(a, a);
  for (std::size_t i = 0; i < m; ++i) s.at(i, i) += 0.1;
  return s;
}

double unif(Rng& rng, double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// --- 1: gradients -----------------------------------------------------------

struct OpResult {
  std::string name;
  int instances = 0;
  double worst = 0.0;
};

template <class Instance>
OpResult check_op(const std::string& name, Instance&& instance) {
  OpResult r{name};
  for (int i = 0; i < kFdInstances; ++i) {
    r.worst = std::max(r.worst, instance(i));
    ++r.instances;
  }
  return r;
}

// Symmetric matrix with a known, well-separated descending spectrum.
Tensor spectrum_matrix(const std::vector<double>& eig, Rng& rng) {
  const std::size_t m = eig.size();
  const Tensor u = spd::random_orthogonal(m, rng);
  Tensor x({m, m}, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < m; ++k) x.at(i, j) += u.at(i, k) * eig[k] * u.at(j, k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < i; ++j) x.at(i, j) = x.at(j, i);
  return x;
}

std::vector<std::vector<std::vector<Var>>> alpha_vars(const std::vector<Var>& leaves, std::size_t blocks,
                                                      std::size_t slots, std::size_t tasks, std::size_t offset) {
  std::vector<std::vector<std::vector<Var>>> out(blocks);
  std::size_t k = offset;
  for (std::size_t l = 0; l < blocks; ++l)
    for (std::size_t n = 0; n < slots; ++n) {
      auto& a = out[l].emplace_back();
      for (std::size_t t = 0; t < tasks; ++t) a.push_back(leaves[k++]);
    }
  return out;
}

train::MetricTrace metric_vars(const std::vector<Var>& leaves, std::size_t blocks, std::size_t slots,
                               std::size_t offset) {
  train::MetricTrace out(blocks);
  std::size_t k = offset;
  for (std::size_t l = 0; l < blocks; ++l)
    for (std::size_t n = 0; n < slots; ++n) out[l].push_back(leaves[k++]);
  return out;
}

void criterion_gradients() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(101);
  std::vector<OpResult> ops;

  ops.push_back(check_op("apl_apply", [&](int) {
    const std::size_t m = pick(rng, 1, 6), d = pick(rng, 1, 5);
    const Tensor x = uniform_tensor({3, d}, -2, 2, rng), w = uniform_tensor({3, d}, -1, 1, rng);
    const Tensor a = uniform_tensor({1, m}, -1, 1, rng), b = uniform_tensor({1, m}, -1.5, 1.5, rng);
    return gradcheck([&](Tape&, const std::vector<Var>& v) { return weighted_sum(apl::apl_apply(v[0], v[1], v[2]), w); },
                     {x, a, b}, kFdStep)
        .relative_error;
  }));

  ops.push_back(check_op("gaussian_gram", [&](int) {
    const std::size_t m = pick(rng, 1, 6);
    const Tensor b = uniform_tensor({1, m}, -2, 2, rng), w = uniform_tensor({m, m}, -1, 1, rng);
    return gradcheck([&](Tape&, const std::vector<Var>& v) { return weighted_sum(apl::gaussian_gram(v[0]), w); }, {b},
                     kFdStep)
        .relative_error;
  }));

  ops.push_back(check_op("mahalanobis_sq", [&](int) {
    const std::size_t m = pick(rng, 1, 6);
    const Tensor a1 = uniform_tensor({1, m}, -1, 1, rng), a2 = uniform_tensor({1, m}, -1, 1, rng);
    return gradcheck([&](Tape&, const std::vector<Var>& v) { return apl::mahalanobis_sq(v[0], v[1], v[2]); },
                     {a1, a2, random_spd(m, rng)}, kFdStep)
        .relative_error;
  }));

  ops.push_back(check_op("lstm_step", [&](int) {
    const std::size_t din = pick(rng, 1, 5), dh = pick(rng, 1, 5), rows = pick(rng, 1, 3);
    seq::LSTMCellParams p(din, dh, rng, "c");
    const Tensor x = uniform_tensor({rows, din}, -1, 1, rng), h = uniform_tensor({rows, dh}, -1, 1, rng);
    const Tensor c = uniform_tensor({rows, dh}, -1, 1, rng), w = uniform_tensor({rows, dh}, -1, 1, rng);
    return gradcheck(
               [&](Tape&, const std::vector<Var>& v) {
                 const seq::LSTMVars cell{v[3], v[4], din, dh};
                 const seq::LSTMState s = seq::lstm_step(cell, v[0], {v[1], v[2]});
                 return weighted_sum(s.h, w) + sum(s.c * s.c);
               },
               {x, h, c, p.weight.value, p.bias.value.as_row()}, kFdStep)
        .relative_error;
  }));

  ops.push_back(check_op("block_forward", [&](int i) {
    seq::BlockConfig cfg;
    cfg.input_size = pick(rng, 2, 4);
    cfg.hidden_size = pick(rng, 2, 4);
    cfg.basis = pick(rng, 1, 3);
    cfg.tasks = pick(rng, 1, 3);
    cfg.aux_hidden = pick(rng, 2, 3);
    cfg.encoder = i % 2 == 0 ? seq::EncoderKind::lstm : seq::EncoderKind::attention;
    seq::TaskAdaptiveBlockParams p(cfg, rng, "b");
    const std::size_t slots = pick(rng, 2, 3);
    const Tensor x = uniform_tensor({slots, cfg.input_size}, -1, 1, rng);
    const Tensor w = uniform_tensor({1, cfg.hidden_size}, -1, 1, rng);
    std::vector<Parameter*> params;
    p.for_each([&params](Parameter& q) { params.push_back(&q); });
    return param_gradcheck(
               [&](Tape& t) {
                 const seq::BlockTrace tr = seq::block_forward(seq::bind(t, p, Binding::trainable), x);
                 Var s = sum(tr.beta[slots - 1] * tr.beta[slots - 1]);
                 for (std::size_t n = 0; n < slots; ++n)
                   for (std::size_t k = 0; k < cfg.tasks; ++k)
                     s = s + weighted_sum(tr.post[n][k], w) + sum(tr.alpha[n][k] * tr.alpha[n][k]);
                 return s;
               },
               params, 12, kFdStep)
        .relative_error;
  }));

  ops.push_back(check_op("bimap_forward", [&](int) {
    const std::size_t m = pick(rng, 2, 5);
    const Tensor x = random_spd(m, rng), beta = uniform_tensor({1, m}, -1, 1, rng);
    const Tensor w = spd::random_orthogonal(m, rng), v = uniform_tensor({m, m}, -1, 1, rng);
    const Tensor b = uniform_tensor({m}, -0.5, 1, rng), wt = uniform_tensor({m, m}, -1, 1, rng);
    return gradcheck(
               [&](Tape&, const std::vector<Var>& p) {
                 return weighted_sum(spd::bimap_forward(p[0], p[1], p[2], p[3], p[4]), wt);
               },
               {x, beta, w, v, b}, kFdStep)
        .relative_error;
  }));

  ops.push_back(check_op("reeig_forward", [&](int) {
    // Eigenvalues at least 0.5 apart; thresholds and ReLU arguments kept at
    // least 0.05 away from every kink.
    const std::size_t m = pick(rng, 2, 5);
    std::vector<double> eig(m);
    for (std::size_t i = 0; i < m; ++i) eig[i] = 0.5 + 0.6 * static_cast<double>(m - 1 - i) + 0.05 * unif(rng);
    const Tensor x = spectrum_matrix(eig, rng);
    const Tensor beta = uniform_tensor({1, m}, -1, 1, rng), wt = uniform_tensor({m, m}, -1, 1, rng);
    Tensor q, c;
    for (;;) {
      q = uniform_tensor({m, m}, -0.3, 0.3, rng);
      c = uniform_tensor({m}, -0.5, 3.0, rng);
      bool clear = true;
      for (std::size_t i = 0; i < m; ++i) {
        double arg = c[i];
        for (std::size_t j = 0; j < m; ++j) arg += q.at(i, j) * beta[j];
        const double eps = std::max(arg, 0.0) + spd::kThresholdFloor;
        clear = clear && std::fabs(arg) > 0.05 && std::fabs(eps - eig[i]) > 0.05;
      }
      if (clear) break;
    }
    return gradcheck(
               [&](Tape&, const std::vector<Var>& p) {
                 return weighted_sum(spd::reeig_forward(p[0], p[1], p[2], p[3]), wt);
               },
               {x, beta, q, c}, kFdStep)
        .relative_error;
  }));

  ops.push_back(check_op("loss_phi", [&](int) {
    const std::size_t blocks = pick(rng, 1, 2), slots = pick(rng, 1, 3), tasks = pick(rng, 2, 3);
    const std::size_t m = pick(rng, 2, 3), rows = 2, classes = 3;
    std::vector<Tensor> inputs;
    for (std::size_t i = 0; i < tasks * slots; ++i) inputs.push_back(uniform_tensor({rows, classes}, -2, 2, rng));
    for (std::size_t i = 0; i < blocks * slots * tasks; ++i) inputs.push_back(uniform_tensor({1, m}, -1, 1, rng));
    for (std::size_t i = 0; i < blocks * slots; ++i) inputs.push_back(random_spd(m, rng));
    train::Targets targets(tasks);
    for (auto& t : targets)
      for (std::size_t n = 0; n < slots; ++n) t.push_back({static_cast<int>(pick(rng, 0, 2)), static_cast<int>(pick(rng, 0, 2))});
    const double lambda = 0.01 + unif(rng);
    return gradcheck(
               [&](Tape&, const std::vector<Var>& v) {
                 std::vector<std::vector<Var>> logits(tasks);
                 for (std::size_t t = 0; t < tasks; ++t)
                   for (std::size_t n = 0; n < slots; ++n) logits[t].push_back(v[t * slots + n]);
                 const auto alphas = alpha_vars(v, blocks, slots, tasks, tasks * slots);
                 const auto metrics = metric_vars(v, blocks, slots, tasks * slots + blocks * slots * tasks);
                 return train::loss_phi(logits, targets, train::distance_trace(alphas, metrics), lambda).total;
               },
               inputs, kFdStep)
        .relative_error;
  }));

  ops.push_back(check_op("loss_theta", [&](int) {
    const std::size_t blocks = pick(rng, 1, 2), slots = pick(rng, 1, 3), tasks = pick(rng, 2, 4);
    const std::size_t m = pick(rng, 2, 3);
    std::vector<Tensor> inputs;
    for (std::size_t i = 0; i < blocks * slots * tasks; ++i) inputs.push_back(uniform_tensor({1, m}, -1, 1, rng));
    for (std::size_t i = 0; i < blocks * slots; ++i) inputs.push_back(random_spd(m, rng));
    return gradcheck(
               [&](Tape&, const std::vector<Var>& v) {
                 const auto alphas = alpha_vars(v, blocks, slots, tasks, 0);
                 const auto metrics = metric_vars(v, blocks, slots, blocks * slots * tasks);
                 return train::loss_theta(train::distance_trace(alphas, metrics));
               },
               inputs, kFdStep)
        .relative_error;
  }));

  bool ok = true;
  std::string worst_name;
  double worst = 0.0;
  for (const auto& op : ops) {
    ok = ok && op.instances >= kFdInstances && op.worst < kFdTolerance;
    if (op.worst >= worst) {
      worst = op.worst;
      worst_name = op.name;
    }
  }
  const double secs = seconds_since(start);
  ok = ok && secs < 120.0;
  report(1, ok, "gradient correctness",
         std::to_string(ops.size()) + " ops x " + std::to_string(kFdInstances) + " instances, worst relative error " +
             fmt(worst) + " (" + worst_name + ") < " + fmt(kFdTolerance) + ", " + fmt(secs, 3) + " s");
  for (const auto& op : ops) note(op.name + ": worst " + fmt(op.worst));
}

// --- 3: metric module ---------------------------------------------------------

void criterion_metric_oracles() {
  Rng rng(303);
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr std::size_t kSamples = 1000000;
  std::vector<double> z(kSamples);
  double worst_mc = 0.0;
  for (int set = 0; set < 20; ++set) {
    const std::size_t m = pick(rng, 1, 8);
    std::vector<double> beta(m);
    for (auto& b : beta) b = unif(rng, -1.0, 1.0);
    for (auto& x : z) x = normal(rng);
    const Tensor g = apl::gaussian_gram(apl::APLBasis(beta));
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i; j < m; ++j) {
        double acc = 0.0;
        for (double x : z) acc += std::max(beta[i] - x, 0.0) * std::max(beta[j] - x, 0.0);
        worst_mc = std::max(worst_mc, std::fabs(acc / static_cast<double>(kSamples) - g.at(i, j)));
      }
    }
  }

  const double zero = apl::gaussian_gram(apl::APLBasis({0.0})).at(0, 0);

  std::size_t violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = pick(rng, 1, 8);
    std::vector<double> beta(m);
    for (auto& b : beta) b = unif(rng, -2.0, 2.0);
    const Tensor metric = apl::gaussian_gram(apl::APLBasis(beta));
    auto coords = [&] {
      std::vector<double> a(m);
      for (auto& v : a) v = unif(rng, -1.0, 1.0);
      return apl::APLCoordinates(a);
    };
    const apl::APLCoordinates a = coords(), b = coords(), c = coords();
    const double ab = apl::mahalanobis_sq(a, b, metric), ba = apl::mahalanobis_sq(b, a, metric);
    const double bc = apl::mahalanobis_sq(b, c, metric), ac = apl::mahalanobis_sq(a, c, metric);
    const double aa = apl::mahalanobis_sq(a, a, metric);
    const double scale = std::max({ab, bc, ac, 1.0});
    if (std::fabs(ab - ba) > 1e-12 * scale) ++violations;
    if (aa != 0.0) ++violations;
    if (ab < 0.0 || bc < 0.0 || ac < 0.0) ++violations;
    if (std::sqrt(ac) > std::sqrt(ab) + std::sqrt(bc) + 1e-12 * std::sqrt(scale)) ++violations;
  }

  const bool ok = worst_mc < 1e-2 && std::fabs(zero - 0.5) < 1e-6 && violations == 0;
  report(3, ok, "metric-module oracles",
         "Monte Carlo (1e6 samples, 20 bases, M <= 8) worst |diff| " + fmt(worst_mc) + " < 0.01; Gram(0) = " +
             fmt(zero, 12) + "; distance property violations on 1000 triples: " + std::to_string(violations));
}

// --- 4: loss formulas -------------------------------------------------------

double quad(const Tensor& a1, const Tensor& a2, const Tensor& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.rows(); ++j) s += (a1[i] - a2[i]) * m.at(i, j) * (a1[j] - a2[j]);
  return s;
}

void criterion_loss_oracles() {
  Rng rng(404);
  double worst_reg = 0.0, worst_theta = 0.0, worst_t2 = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t blocks = 2, slots = 2, tasks = 3, m = 3;
    std::vector<std::vector<std::vector<Tensor>>> alpha(blocks);
    std::vector<std::vector<Tensor>> metric(blocks);
    Tape t;
    std::vector<std::vector<std::vector<Var>>> av(blocks);
    train::MetricTrace mv(blocks);
    for (std::size_t l = 0; l < blocks; ++l) {
      for (std::size_t n = 0; n < slots; ++n) {
        auto& a = alpha[l].emplace_back();
        auto& v = av[l].emplace_back();
        for (std::size_t k = 0; k < tasks; ++k) {
          a.push_back(uniform_tensor({1, m}, -1, 1, rng));
          v.push_back(t.constant(a.back()));
        }
        metric[l].push_back(random_spd(m, rng));
        mv[l].push_back(t.constant(metric[l].back()));
      }
    }
    const train::DistanceTrace d = train::distance_trace(av, mv);
    double reg = 0.0, theta = 0.0;
    for (std::size_t l = 0; l < blocks; ++l) {
      for (std::size_t n = 0; n < slots; ++n) {
        double dd[3][3];
        for (std::size_t i = 0; i < tasks; ++i)
          for (std::size_t j = 0; j < tasks; ++j) {
            dd[i][j] = quad(alpha[l][n][i], alpha[l][n][j], metric[l][n]);
            reg += std::fabs(dd[i][j]);
          }
        for (std::size_t i = 0; i < tasks; ++i) {
          std::size_t k = i == 0 ? 1 : 0;
          for (std::size_t j = 0; j < tasks; ++j)
            if (j != i && dd[i][j] > dd[i][k]) k = j;
          double denom = 0.0;
          for (std::size_t j = 0; j < tasks; ++j)
            if (j != k) denom += std::exp(dd[i][j]);
          theta += std::log(std::exp(dd[i][k]) / denom);
        }
      }
    }
    worst_reg = std::max(worst_reg, std::fabs(train::regularizer(d).value().item() - reg));
    worst_theta = std::max(worst_theta, std::fabs(train::loss_theta(d).value().item() - theta));

    // T = 2, one block and slot: both objectives reduce to 2 d²₁₂.
    Tape t2;
    const Tensor a1 = uniform_tensor({1, m}, -1, 1, rng), a2 = uniform_tensor({1, m}, -1, 1, rng);
    const Tensor mm = random_spd(m, rng);
    const train::DistanceTrace d2 =
        train::distance_trace(std::vector<std::vector<std::vector<Var>>>{{{t2.constant(a1), t2.constant(a2)}}},
                              train::MetricTrace{{t2.constant(mm)}});
    const double d12 = d2[0][0].value().at(0, 1);
    worst_t2 = std::max({worst_t2, std::fabs(train::regularizer(d2).value().item() - 2.0 * d12),
                         std::fabs(train::loss_theta(d2).value().item() - 2.0 * d12)});
  }
  const bool ok = worst_reg <= 1e-10 && worst_theta <= 1e-10 && worst_t2 == 0.0;
  report(4, ok, "loss formula oracles",
         "regularizer vs enumeration " + fmt(worst_reg) + ", metric loss vs enumeration " + fmt(worst_theta) +
             " (tolerance 1e-10, T=3, L=2, N=2, 20 draws); T=2 closed forms max |diff| " + fmt(worst_t2));
}

// --- 8: parameter count -----------------------------------------------------

void criterion_parameter_count() {
  cli::RunConfig rc;
  rc.finalize();
  const auto crossover = seq::parameter_crossover(rc.train.model, rc.train.spd_layers);
  bool all_smaller = true;
  for (std::size_t t = 5; t <= 64; ++t) {
    seq::HtanConfig cfg = rc.train.model;
    cfg.tasks = t;
    const auto pc = seq::parameter_count(cfg, rc.train.spd_layers);
    all_smaller = all_smaller && pc.htan_total < pc.baseline_total;
  }
  seq::HtanConfig at5 = rc.train.model;
  at5.tasks = 5;
  const auto pc5 = seq::parameter_count(at5, rc.train.spd_layers);
  const bool ok = crossover && *crossover <= 5 && all_smaller;
  report(8, ok, "parameter count",
         "crossover T = " + (crossover ? std::to_string(*crossover) : std::string("none")) +
             "; at T=5 HTAN " + std::to_string(pc5.htan_total) + " vs baseline " + std::to_string(pc5.baseline_total) +
             "; HTAN smaller for every T in [5, 64]: " + (all_smaller ? "yes" : "no"));
}

// --- training runs ----------------------------------------------------------

struct Run {
  std::uint64_t seed = 0;
  double lambda = 0.0;
  cli::TrainOutcome outcome;
};

Run train_default(std::uint64_t seed, double lambda, const fs::path& root) {
  cli::RunConfig rc;
  rc.set_seed(seed);
  rc.train.lambda = lambda;
  rc.out_dir = root / ("seed" + std::to_string(seed) + (lambda > 0.0 ? "_htan" : "_ablation"));
  std::ostringstream log;
  Run r{seed, lambda, cli::run_training(rc, log)};
  return r;
}

void criterion_invariants(const std::vector<Run>& runs) {
  std::size_t metrics = 0, stiefel = 0, violations = 0, checksum = 0;
  double min_eig = std::numeric_limits<double>::infinity(), asym = 0.0, orth = 0.0;
  for (const auto& r : runs) {
    const auto& inv = r.outcome.invariants;
    metrics += inv.metrics_checked;
    stiefel += inv.stiefel_checks;
    violations += inv.spd_violations + inv.stiefel_violations;
    checksum += inv.checksum_violations;
    min_eig = std::min(min_eig, inv.worst_min_eigenvalue);
    asym = std::max(asym, inv.worst_asymmetry);
    orth = std::max(orth, inv.worst_orthogonality);
  }
  const bool ok = violations == 0 && min_eig >= 1e-10 && asym <= 1e-10 && orth < 1e-6 && metrics > 0 && stiefel > 0;
  report(2, ok, "manifold invariants",
         std::to_string(metrics) + " metrics checked, min eigenvalue " + fmt(min_eig) + ", max asymmetry " + fmt(asym) +
             "; " + std::to_string(stiefel) + " Stiefel checks, max ||WW^T - I|| " + fmt(orth) + "; violations " +
             std::to_string(violations) + " (over " + std::to_string(runs.size()) + " runs)");
  if (checksum != 0) note("frozen-player checksum violations: " + std::to_string(checksum));
}

void criterion_directionality(const std::vector<Run>& runs) {
  std::size_t total = 0, passed = 0, phi = 0, phi_ok = 0, theta = 0, theta_ok = 0;
  for (const auto& r : runs) {
    for (const auto& c : r.outcome.checks) {
      ++total;
      passed += c.passed() ? 1 : 0;
      if (c.player == train::Player::phi) {
        ++phi;
        phi_ok += c.passed() ? 1 : 0;
      } else {
        ++theta;
        theta_ok += c.passed() ? 1 : 0;
      }
    }
  }
  const double frac = total == 0 ? 0.0 : static_cast<double>(passed) / static_cast<double>(total);
  report(5, total > 0 && frac >= 0.99, "adversarial directionality",
         std::to_string(passed) + "/" + std::to_string(total) + " logged steps pass (" + fmt(100.0 * frac) +
             "% >= 99%); descent " + std::to_string(phi_ok) + "/" + std::to_string(phi) + ", ascent " +
             std::to_string(theta_ok) + "/" + std::to_string(theta));
}

void criterion_efficacy(const std::vector<Run>& htan, const std::vector<Run>& ablation) {
  double with = 0.0, without = 0.0;
  std::string per_seed;
  for (std::size_t i = 0; i < htan.size(); ++i) {
    const double a = htan[i].outcome.test.mean_loss(), b = ablation[i].outcome.test.mean_loss();
    with += a;
    without += b;
    per_seed += " seed " + std::to_string(htan[i].seed) + ": " + fmt(a, 6) + " vs " + fmt(b, 6) + ";";
  }
  with /= static_cast<double>(htan.size());
  without /= static_cast<double>(ablation.size());
  report(6, with < without, "end-to-end efficacy",
         "mean test cross-entropy lambda=0.01 " + fmt(with, 6) + " vs lambda=0 " + fmt(without, 6) + ", margin " +
             fmt(without - with, 3) + " over " + std::to_string(htan.size()) + " seeds");
  note("per seed (lambda=0.01 vs lambda=0):" + per_seed);

  // Regression fixture: five epochs cut the mean task loss by at least 20%.
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& r : htan) {
    const auto& e = r.outcome.epochs;
    auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
    worst = std::min(worst, 1.0 - mean(e.back().task_loss) / mean(e.front().task_loss));
  }
  note(std::string(worst >= 0.2 ? "fixture PASS" : "fixture FAIL") +
       "  epoch-1 to final-epoch reduction of mean task loss, worst seed " + fmt(100.0 * worst, 3) + "% (>= 20%)");
  if (worst < 0.2) ++failures;
}

void criterion_relation(const std::vector<Run>& runs) {
  double mean = 0.0;
  std::string per_seed;
  for (const auto& r : runs) {
    mean += r.outcome.relation_spearman;
    per_seed += " seed " + std::to_string(r.seed) + ": " + fmt(r.outcome.relation_spearman) + ";";
  }
  mean /= static_cast<double>(runs.size());
  report(7, mean < 0.0 && std::fabs(mean) >= 0.3, "relation recovery",
         "mean Spearman(d^2, coupling) " + fmt(mean) + " (needs negative with |rho| >= 0.3)");
  note("per seed:" + per_seed);
}

// --- 9: determinism and persistence -----------------------------------------

std::vector<std::pair<double, double>> read_covariance(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  std::vector<std::pair<double, double>> out;  // abs_cov, gt_coupling
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    out.emplace_back(std::stod(cells.at(3)), std::stod(cells.at(4)));
  }
  return out;
}

void criterion_determinism(const Run& reference, const fs::path& root) {
  const Run again = train_default(reference.seed, reference.lambda, root / "repeat");
  const bool same_metrics = slurp(reference.outcome.dir / "metrics.csv") == slurp(again.outcome.dir / "metrics.csv");

  const fs::path ckpt = reference.outcome.dir / "model.htan", copy = root / "roundtrip.htan";
  train::Model loaded = train::load_model(ckpt);
  train::save_model(copy, loaded);
  const bool same_ckpt = slurp(ckpt) == slurp(copy);
  const auto test = data::load_dataset(reference.outcome.dir / "test.data");
  const train::EvalResult e = train::evaluate(loaded, test);
  const bool same_eval = e.task_loss == reference.outcome.test.task_loss;

  // |cov| averaged over the C² event pairs: 0 for independent labels and
  // 2(1 − Σ p²)/C² = 4/27 for identical uniform labels over three classes.
  constexpr std::size_t kSequences = 2000;
  const double sigma = (2.0 / 9.0) / std::sqrt(static_cast<double>(kSequences));
  double worst_zero = 0.0, worst_one = 0.0;
  bool gt_ok = true;
  for (double rho : {0.0, 1.0}) {
    data::RegimeSwitchingSpec s;
    s.sequences = kSequences;
    s.coupling = {rho, rho};
    const fs::path path = root / (rho == 0.0 ? "cov_zero.csv" : "cov_one.csv");
    cli::write_covariance_csv(path, data::generate_dataset(s));
    for (const auto& [v, gt] : read_covariance(path)) {
      gt_ok = gt_ok && gt == rho;
      if (rho == 0.0) worst_zero = std::max(worst_zero, v);
      else worst_one = std::max(worst_one, std::fabs(v - 4.0 / 27.0));
    }
  }
  const bool cov_ok = gt_ok && worst_zero <= 4.0 * sigma && worst_one <= 4.0 * sigma;
  report(9, same_metrics && same_ckpt && same_eval && cov_ok, "determinism and persistence",
         std::string("metrics.csv byte-identical: ") + (same_metrics ? "yes" : "no") +
             "; checkpoint round trip bit-exact: " + (same_ckpt && same_eval ? "yes" : "no") +
             "; covariance rho=0 max " + fmt(worst_zero) + ", rho=1 max |v - 4/27| " + fmt(worst_one) +
             " (bound 4 sigma = " + fmt(4.0 * sigma) + ")");
}

}  // namespace

int main(int argc, char** argv) {
  fs::path root = fs::temp_directory_path() / "htan_acceptance";
  if (argc > 1) root = argv[1];
  fs::remove_all(root);
  fs::create_directories(root);

  criterion_gradients();

  const auto start = std::chrono::steady_clock::now();
  std::vector<Run> htan, ablation;
  for (auto seed : kSeeds) {
    htan.push_back(train_default(seed, 0.01, root));
    ablation.push_back(train_default(seed, 0.0, root));
  }
  const double train_secs = seconds_since(start);
  std::vector<Run> all = htan;
  all.insert(all.end(), ablation.begin(), ablation.end());

  criterion_invariants(all);
  criterion_metric_oracles();
  criterion_loss_oracles();
  criterion_directionality(all);
  criterion_efficacy(htan, ablation);
  note("training time for " + std::to_string(all.size()) + " default runs: " + fmt(train_secs / 60.0, 3) + " min");
  criterion_relation(htan);
  criterion_parameter_count();
  criterion_determinism(htan.front(), root);

  std::printf("%s: %d failure(s)\n", failures == 0 ? "ALL PASS" : "FAILED", failures);
  return failures == 0 ? 0 : 1;
}
