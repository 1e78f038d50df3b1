#include <benchmark/benchmark.h>

#include "htan/apl.hpp"
#include "htan/spd.hpp"
#include "htan/synthetic.hpp"
#include "htan/training.hpp"

using namespace htan;

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = uniform_tensor({n, n}, -1, 1, rng), b = uniform_tensor({n, n}, -1, 1, rng);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::matmul(a, b));
}
BENCHMARK(BM_Matmul)->Arg(8)->Arg(64);

static void BM_GaussianGram(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  std::vector<double> beta(m);
  for (std::size_t i = 0; i < m; ++i) beta[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(m);
  const apl::APLBasis basis(beta);
  for (auto _ : state) benchmark::DoNotOptimize(apl::gaussian_gram(basis));
}
BENCHMARK(BM_GaussianGram)->Arg(4)->Arg(8);

static void BM_GaussianGramBackward(benchmark::State& state) {
  Rng rng(2);
  const Tensor beta = uniform_tensor({1, 8}, -1, 1, rng);
  for (auto _ : state) {
    Tape t;
    Var b = t.variable(beta);
    t.backward(sum(apl::gaussian_gram(b)));
    benchmark::DoNotOptimize(b.grad());
  }
}
BENCHMARK(BM_GaussianGramBackward);

static void BM_SpdNetStep(benchmark::State& state) {
  Rng rng(3);
  spd::SPDNetParams net(8, 2, rng);
  const Tensor m0 = apl::gaussian_gram(apl::APLBasis({-1, -0.7, -0.4, -0.1, 0.1, 0.4, 0.7, 1}));
  const Tensor beta = uniform_tensor({1, 8}, -1, 1, rng);
  for (auto _ : state) {
    Tape t;
    benchmark::DoNotOptimize(spd::spdnet_step(t.constant(m0), t.constant(beta), spd::bind(t, net, Binding::frozen)).value());
  }
}
BENCHMARK(BM_SpdNetStep);

// One epoch over a single batch of the default model.
static void BM_TrainingStep(benchmark::State& state) {
  data::RegimeSwitchingSpec spec;
  spec.sequences = 8;
  const data::SequenceBatch batch = data::generate_dataset(spec);
  train::TrainConfig cfg;
  cfg.batch_size = 8;
  train::Model model(cfg);
  train::Trainer trainer(model, cfg);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.train_epoch(batch));
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
