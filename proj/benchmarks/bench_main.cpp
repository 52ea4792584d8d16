#include <mcq/fixtures.hpp>
#include <mcq/inference.hpp>
#include <mcq/quantizer.hpp>
#include <mcq/sampler.hpp>

#include "support/oracles.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace mcq;

struct HitInput {
  CdfPartition cdf;
  std::vector<std::int8_t> signs;
  SampleStream stream;
};

HitInput hit_input(std::size_t n, bool sort) {
  std::mt19937_64 gen(1);
  HitInput in;
  in.cdf = build_cdf(testing::random_probs(gen, n), sort);
  in.signs.assign(n, 1);
  in.stream = {static_cast<std::int64_t>(n), 0.5};
  return in;
}

void BM_CountHitsScan(benchmark::State& state) {
  const HitInput in = hit_input(static_cast<std::size_t>(state.range(0)), true);
  for (auto _ : state) benchmark::DoNotOptimize(count_hits(in.cdf, in.stream, in.signs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CountHitsScan)->RangeMultiplier(8)->Range(1 << 10, 1 << 20);

void BM_CountHitsBinarySearch(benchmark::State& state) {
  const HitInput in = hit_input(static_cast<std::size_t>(state.range(0)), true);
  for (auto _ : state) benchmark::DoNotOptimize(testing::count_hits_binary_search(in.cdf, in.stream, in.signs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CountHitsBinarySearch)->RangeMultiplier(8)->Range(1 << 10, 1 << 20);

void BM_QuantizeTensor(benchmark::State& state) {
  const std::int64_t side = state.range(0);
  Tensor w({side, side});
  Rng init(3);
  for (auto& v : w.values()) v = static_cast<float>(init.next_gaussian());
  for (auto _ : state) {
    Rng rng(42);
    benchmark::DoNotOptimize(quantize_tensor(w, TensorSampling{1.0, state.range(1) != 0}, rng));
  }
  state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_QuantizeTensor)->ArgsProduct({{64, 256, 1024}, {0, 1}});

void BM_Forward(benchmark::State& state) {
  const Fixture f = make_fixture(state.range(0) ? FixtureKind::cnn_blobs : FixtureKind::mlp_blobs, 7);
  const ModelGraph q = quantize_model(f.model, SamplingConfig{}).model;
  std::size_t i = 0;
  for (auto _ : state) {
    const Tensor& x = f.dataset.inputs[i++ % f.dataset.size()];
    switch (state.range(1)) {
    case 0: benchmark::DoNotOptimize(forward_full_precision(f.model, x)); break;
    case 1: benchmark::DoNotOptimize(forward_quantized(q, x, InferenceOptions{}, i)); break;
    default: {
      InferenceOptions opt;
      opt.pipeline = Pipeline::deferred;
      benchmark::DoNotOptimize(forward_quantized(q, x, opt, i));
    }
    }
  }
}
// (fixture: 0 mlp / 1 cnn, pass: 0 fp32 / 1 rescale / 2 deferred)
BENCHMARK(BM_Forward)->ArgsProduct({{0, 1}, {0, 1, 2}});

} // namespace

BENCHMARK_MAIN();
