#include <benchmark/benchmark.h>

#include "segsr/ops.hpp"
#include "segsr/rng.hpp"
#include "segsr/spsa.hpp"
#include "segsr/synth.hpp"

namespace {

using namespace segsr;

Tensor<float> noise(Shape s, Rng& rng) {
  Tensor<float> t(s);
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  const Tensor<float> x = noise(Shape{1, c, hw, hw}, rng);
  const Tensor<float> k = noise(Shape{c, c, 3, 3}, rng);
  for (auto _ : state) {
    Graph<float> g;
    benchmark::DoNotOptimize(conv2d(g.input(x), g.input(k), Conv2dOptions{1, 1}).value().ptr());
  }
  state.counters["MACs"] = benchmark::Counter(static_cast<double>(hw * hw * 9 * c * c),
                                              benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Conv3x3)->Args({16, 24})->Args({16, 48})->Args({32, 24});

void BM_Conv3x3Backward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Tensor<float> x = noise(Shape{1, c, 24, 24}, rng);
  const Tensor<float> k = noise(Shape{c, c, 3, 3}, rng);
  for (auto _ : state) {
    Graph<float> g;
    Var<float> loss = sum(conv2d(g.input(x), g.input(k), Conv2dOptions{1, 1}));
    g.backward(loss);
    benchmark::DoNotOptimize(loss.value().ptr());
  }
}
BENCHMARK(BM_Conv3x3Backward)->Arg(16);

// Full SPSA layer on an h x h feature grid (N = h^2 positions).
void BM_SpsaForward(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  SpsaLayer<float> layer(16, {}, rng);
  const Tensor<float> x = noise(Shape{1, 16, h, h}, rng);
  const Tensor<float> seg = synth_pair(4 * h, 4 * h, 4).seg.batched();
  layer.calibrate_alpha(x, seg);
  for (auto _ : state) {
    Graph<float> g;
    ForwardContext<float> ctx(g, false);
    benchmark::DoNotOptimize(layer.forward(ctx, g.input(x), g.input(seg)).y.value().ptr());
  }
  state.counters["N"] = static_cast<double>(h * h);
}
BENCHMARK(BM_SpsaForward)->Arg(8)->Arg(16)->Arg(24)->Arg(32);

}  // namespace
