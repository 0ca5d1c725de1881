#include <benchmark/benchmark.h>

#include "ctgpt/adapter/adapter.hpp"
#include "ctgpt/model/report_model.hpp"
#include "ctgpt/tensor/ops.hpp"
#include "ctgpt/volume/prep.hpp"

using namespace ctgpt;

namespace {

Tensor<float> random_tensor(Shape shape, std::uint64_t seed, bool grad = false) {
  Rng rng(seed);
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return Tensor<float>::from_data(std::move(shape), std::move(v), grad);
}

model::ReportModel<float> desk_model() {
  auto cfg = model::desk_config();
  auto texts = model::prompt_texts(cfg);
  texts.push_back("a small nodule in the upper right region.");
  return model::ReportModel<float>::create(cfg, lm::Vocab::build(texts), 1);
}

volume::PreparedVolume desk_volume() {
  const volume::Dims3 d{24, 48, 48};
  volume::PreparedVolume v{d, std::vector<float>(volume::voxel_count(d)), "bench"};
  Rng rng(3);
  for (auto& x : v.values) x = static_cast<float>(2.0 * rng.uniform() - 1.0);
  return v;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

static void BM_CausalAttention(benchmark::State& state) {
  const auto L = static_cast<std::size_t>(state.range(0));
  auto q = random_tensor({1, L, 64}, 1), k = random_tensor({1, L, 64}, 2), v = random_tensor({1, L, 64}, 3);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(ops::attention(q, k, v, 4, true));
}
BENCHMARK(BM_CausalAttention)->Arg(64)->Arg(128)->Arg(256);

static void BM_AttentionBackward(benchmark::State& state) {
  const auto L = static_cast<std::size_t>(state.range(0));
  auto q = random_tensor({1, L, 64}, 1, true), k = random_tensor({1, L, 64}, 2, true),
       v = random_tensor({1, L, 64}, 3, true);
  for (auto _ : state) {
    auto loss = ops::sum(ops::attention(q, k, v, 4, true));
    loss.backward();
  }
}
BENCHMARK(BM_AttentionBackward)->Arg(128);

static void BM_AdaptTokens(benchmark::State& state) {
  auto grid = random_tensor({1, 16, 16, 16, 512}, 4);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(adapter::adapt_tokens(grid, 2));
}
BENCHMARK(BM_AdaptTokens)->Unit(benchmark::kMillisecond);

static void BM_EncodeDesk(benchmark::State& state) {
  const auto m = desk_model();
  const auto v = desk_volume();
  for (auto _ : state) benchmark::DoNotOptimize(m.pooled_tokens(v));
}
BENCHMARK(BM_EncodeDesk)->Unit(benchmark::kMillisecond);

static void BM_TrainStepDesk(benchmark::State& state) {
  auto m = desk_model();
  m.params.freeze_all_except({"projector.", "lora."});
  const auto pooled = m.pooled_tokens(desk_volume());
  for (auto _ : state) {
    m.params.zero_grad();
    auto loss = m.report_loss(pooled, m.config.instructions[0], "a small nodule in the upper right region.");
    loss.backward();
  }
}
BENCHMARK(BM_TrainStepDesk)->Unit(benchmark::kMillisecond);

static void BM_GreedyGenerateDesk(benchmark::State& state) {
  const auto m = desk_model();
  const auto pooled = m.pooled_tokens(desk_volume());
  for (auto _ : state) benchmark::DoNotOptimize(m.generate_ids(pooled, m.config.instructions[0], {0.0, 32, 0}));
}
BENCHMARK(BM_GreedyGenerateDesk)->Unit(benchmark::kMillisecond);

static void BM_ResampleTrilinear(benchmark::State& state) {
  volume::Field f{{32, 64, 64}, std::vector<float>(32 * 64 * 64, 1.0f)};
  for (auto _ : state) benchmark::DoNotOptimize(volume::resample_trilinear(f, {2.5, 0.9, 0.9}));
}
BENCHMARK(BM_ResampleTrilinear)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
