#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "layerens/fusion/fusion.hpp"
#include "layerens/label_mask.hpp"
#include "layerens/metrics/metrics.hpp"
#include "layerens/model/network.hpp"
#include "layerens/nn/ops.hpp"
#include "layerens/uncertainty/uncertainty.hpp"

namespace {

using layerens::LabelMask;
using layerens::nn::Tensor;

Tensor random_tensor(layerens::nn::Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = n(rng);
  return t;
}

// Disc of the given radius around a jittered centre.
LabelMask disc(std::size_t size, double radius, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> jitter(-2.0, 2.0);
  const double cy = size / 2.0 + jitter(rng), cx = size / 2.0 + jitter(rng);
  LabelMask m(size, size, 1);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double dy = y - cy, dx = x - cx;
      m(y, x) = dy * dy + dx * dx <= radius * radius ? 1 : 0;
    }
  return m;
}

layerens::model::ModelConfig bench_config(std::size_t size) {
  layerens::model::ModelConfig c;
  c.height = size;
  c.width = size;
  return c;
}

void BM_Conv3x3(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  const auto size = static_cast<std::size_t>(state.range(1));
  const Tensor input = random_tensor({1, channels, size, size}, 1);
  const Tensor kernel = random_tensor({channels, channels, 3, 3}, 2);
  const Tensor bias = random_tensor({channels}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(layerens::nn::conv2d_forward(input, kernel, bias, 1, 1));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(channels * channels * 9 * size * size));
}
BENCHMARK(BM_Conv3x3)->Args({16, 64})->Args({32, 32})->Args({64, 16});

void BM_ForwardAllHeads(benchmark::State& state) {
  const layerens::model::Network net(bench_config(64));
  const Tensor image = random_tensor({1, 64, 64}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward_all_heads(image));
}
BENCHMARK(BM_ForwardAllHeads)->Unit(benchmark::kMillisecond);

void BM_ForwardSingleHead(benchmark::State& state) {
  const layerens::model::Network net(bench_config(64));
  const Tensor image = random_tensor({1, 64, 64}, 4);
  const auto head = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(net.forward_single_head(image, head));
}
BENCHMARK(BM_ForwardSingleHead)->Arg(0)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_Staple(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::vector<LabelMask> raters;
  for (int r = 0; r < state.range(0); ++r) raters.push_back(disc(64, 14.0 + r % 3, rng));
  for (auto _ : state) benchmark::DoNotOptimize(layerens::fusion::staple_fuse(raters));
}
BENCHMARK(BM_Staple)->Arg(3)->Arg(10);

void BM_Mhd(benchmark::State& state) {
  std::mt19937_64 rng(6);
  const auto size = static_cast<std::size_t>(state.range(0));
  const LabelMask a = disc(size, size / 4.0, rng), b = disc(size, size / 3.5, rng);
  for (auto _ : state) benchmark::DoNotOptimize(layerens::metrics::mhd(a, b));
}
BENCHMARK(BM_Mhd)->Arg(64)->Arg(256);

void BM_UncertaintyReport(benchmark::State& state) {
  const layerens::model::Network net(bench_config(64));
  const auto heads = net.forward_all_heads(random_tensor({1, 64, 64}, 7));
  for (auto _ : state) benchmark::DoNotOptimize(layerens::uncertainty::build_report(heads, 0));
}
BENCHMARK(BM_UncertaintyReport);

}  // namespace

// libbenchmark_main ships as LTO bytecode from another compiler release.
BENCHMARK_MAIN();
