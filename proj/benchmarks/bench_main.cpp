// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>

#include "infillgen/data/example.hpp"
#include "infillgen/decode/decoder.hpp"
#include "infillgen/harness/toy_tasks.hpp"
#include "infillgen/harness/trainer.hpp"
#include "infillgen/model/params.hpp"
#include "infillgen/tensor/kernels.hpp"

namespace ig = infillgen;

namespace {

ig::tensor::Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  ig::tensor::Tensor t({rows, cols});
  for (double& v : t.data()) v = normal(rng);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1);
  const auto b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ig::tensor::kernels::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128)->Arg(256);

void BM_TrainStep(benchmark::State& state) {
  ig::harness::ToyTaskConfig task;
  const auto pairs = ig::harness::generate_toy_pairs(task, 256, 1);
  ig::model::ModelConfig config;
  ig::harness::TrainerOptions options;
  options.optimizer.peak_lr = 1e-3;
  options.optimizer.warmup_steps = 10;
  options.optimizer.total_steps = 1000000;
  options.batch_size = static_cast<std::size_t>(state.range(0));
  ig::data::NoiseConfig noise;
  noise.vocab_size = static_cast<ig::text::TokenId>(task.vocab_size);
  ig::harness::Trainer trainer(
      ig::model::ModelParams::initialize(config, 7), options,
      [&](std::size_t i, std::uint64_t seed) {
        return ig::data::assemble_pair(pairs[i].source, pairs[i].target, nullptr,
                                       ig::data::CorruptionMode::kNoising, noise, seed);
      },
      pairs.size());
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_Decode(benchmark::State& state) {
  ig::model::ModelConfig config;
  const auto model = ig::model::ModelParams::initialize(config, 7);
  std::vector<ig::text::TokenId> source(16);
  for (std::size_t i = 0; i < source.size(); ++i) source[i] = static_cast<ig::text::TokenId>(6 + i);
  ig::decode::DecodeConfig cfg;
  cfg.beam_size = static_cast<std::size_t>(state.range(0));
  cfg.max_length = 20;
  cfg.min_length = 20;
  for (auto _ : state) benchmark::DoNotOptimize(ig::decode::decode(model, source, cfg));
}
BENCHMARK(BM_Decode)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_FullRecomputeStep(benchmark::State& state) {
  ig::model::ModelConfig config;
  const auto model = ig::model::ModelParams::initialize(config, 7);
  std::vector<ig::text::TokenId> source(16, 6), prefix(static_cast<std::size_t>(state.range(0)), 7);
  for (auto _ : state) benchmark::DoNotOptimize(ig::decode::full_recompute_logits(model, source, prefix));
}
BENCHMARK(BM_FullRecomputeStep)->Arg(1)->Arg(19)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
