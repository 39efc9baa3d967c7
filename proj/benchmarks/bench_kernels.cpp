#include <benchmark/benchmark.h>

#include <random>

#include "padprobe/encoder.hpp"
#include "padprobe/kernels.hpp"

using namespace padprobe;

namespace {

Tensor random_tensor(const Shape& dims, std::uint64_t seed) {
  Tensor t(dims);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0F, 1.0F);
  for (float& v : t.values()) v = d(rng);
  return t;
}

// args: channels in/out, side
void BM_Conv3x3Forward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto side = static_cast<std::size_t>(state.range(1));
  const Tensor x = random_tensor({8, c, side, side}, 1);
  const Tensor w = random_tensor({c, c, 3, 3}, 2);
  const Tensor b = random_tensor({c}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d(x, w, b, {1, 1}));
  state.SetItemsProcessed(state.iterations() * 8 * static_cast<int64_t>(c * c * 9 * side * side));
}
BENCHMARK(BM_Conv3x3Forward)->Args({16, 64})->Args({64, 16})->Args({128, 8});

void BM_Conv3x3Backward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto side = static_cast<std::size_t>(state.range(1));
  const Tensor x = random_tensor({8, c, side, side}, 1);
  const Tensor w = random_tensor({c, c, 3, 3}, 2);
  const Tensor g = random_tensor({8, c, side, side}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d_backward(x, w, g, {1, 1}, true, true));
}
BENCHMARK(BM_Conv3x3Backward)->Args({16, 64})->Args({64, 16});

void BM_BilinearResize(benchmark::State& state) {
  const Tensor x = random_tensor({8, 1, 6, 6}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::bilinear_resize(x, 64, 64));
}
BENCHMARK(BM_BilinearResize);

void BM_TinyVggTaps(benchmark::State& state) {
  Encoder e = Encoder::build(EncoderSpec::defaults(EncoderFamily::TinyVgg), 1);
  const Tensor x = random_tensor({8, 3, 64, 64}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(e.forward_taps(x));
}
BENCHMARK(BM_TinyVggTaps)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
