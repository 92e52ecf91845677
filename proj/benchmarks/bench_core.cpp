#include <benchmark/benchmark.h>

#include <vector>

#include "dcc/datagen.hpp"
#include "dcc/eval.hpp"
#include "dcc/linalg.hpp"
#include "dcc/loss.hpp"
#include "dcc/model.hpp"
#include "dcc/rng.hpp"
#include "dcc/train.hpp"

namespace {

dcc::Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  dcc::Rng rng(seed);
  dcc::Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(-1.0, 1.0);
  return m;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const dcc::Matrix a = random_matrix(n, n, 1), b = random_matrix(n, 256, 2);
  for (auto _ : state) benchmark::DoNotOptimize(dcc::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * 256));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(256);

void BM_ForwardBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const std::vector<std::size_t> dims{3, 64, 64, 3};
  const dcc::MlpParams p = dcc::init_params(dims, 0);
  const dcc::Matrix x = random_matrix(3, batch, 3);
  const dcc::Matrix g = random_matrix(3, batch, 4);
  for (auto _ : state) {
    auto [m, tape] = dcc::forward(p, x);
    benchmark::DoNotOptimize(dcc::backward(p, tape, g));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(batch));
}
BENCHMARK(BM_ForwardBackward)->Arg(256)->Arg(4096);

void BM_SgdStep(benchmark::State& state) {
  const dcc::GroundTruth gt = dcc::synth_generate(2000, 3, 0);
  const dcc::AnnotationSet ann =
      dcc::sample_annotations(gt, 128, dcc::default_confusion_k3().gram(), 1);
  dcc::TrainConfig cfg;
  cfg.lambda = state.range(0) ? 1e-3 : 0.0;
  dcc::MlpParams p = dcc::init_params(cfg.layer_dims(3), 0);
  const dcc::Matrix features = gt.seen_features();
  for (auto _ : state) benchmark::DoNotOptimize(dcc::sgd_step(p, features, ann.triplets, cfg));
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_SgdStep)->Arg(0)->Arg(1);

void BM_LogdetGram(benchmark::State& state) {
  const dcc::Matrix m = random_matrix(3, static_cast<std::size_t>(state.range(0)), 5);
  for (auto _ : state) benchmark::DoNotOptimize(dcc::logdet_gram(m, 1e-8));
}
BENCHMARK(BM_LogdetGram)->Arg(256)->Arg(1000);

void BM_Hungarian(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const dcc::Matrix cost = random_matrix(k, k, 6);
  for (auto _ : state) benchmark::DoNotOptimize(dcc::hungarian(cost));
}
BENCHMARK(BM_Hungarian)->Arg(3)->Arg(10)->Arg(50);

void BM_EvaluateModel(benchmark::State& state) {
  const dcc::GroundTruth gt = dcc::synth_generate(2000, 3, 0);
  const std::vector<std::size_t> dims{3, 64, 64, 3};
  const dcc::MlpParams p = dcc::init_params(dims, 0);
  for (auto _ : state) benchmark::DoNotOptimize(dcc::evaluate_model(p, gt));
}
BENCHMARK(BM_EvaluateModel)->Unit(benchmark::kMillisecond);

void BM_SampleAnnotations(benchmark::State& state) {
  const dcc::GroundTruth gt = dcc::synth_generate(2000, 3, 0);
  const dcc::Matrix b = dcc::default_confusion_k3().gram();
  for (auto _ : state) benchmark::DoNotOptimize(dcc::sample_annotations(gt, 10000, b, 2));
  state.SetItemsProcessed(state.iterations() * 10000);
}
BENCHMARK(BM_SampleAnnotations);

}  // namespace

BENCHMARK_MAIN();
