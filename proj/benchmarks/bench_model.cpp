#include <benchmark/benchmark.h>

#include "segsr/generator.hpp"
#include "segsr/rrsb.hpp"
#include "segsr/synth.hpp"

namespace {

using namespace segsr;

Tensor<float> noise(Shape s, Rng& rng) {
  Tensor<float> t(s);
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

// Drops `per_block` of the earliest skip connections in every block.
RrdbMask thinned(std::size_t layers, std::size_t per_block) {
  RrdbMask m{BlockMask::full(layers), BlockMask::full(layers), BlockMask::full(layers)};
  for (BlockMask& b : m) {
    std::size_t dropped = 0;
    for (std::size_t l = layers; l >= 2 && dropped < per_block; --l)
      for (std::size_t i = 1; i < l && dropped < per_block; ++i, ++dropped) b.set(l, i, false);
  }
  return m;
}

// Dense RRDB (arg 0) against RRSB variants with more connections removed.
void BM_RrdbForward(benchmark::State& state) {
  const auto dropped = static_cast<std::size_t>(state.range(0));
  const DenseBlockConfig cfg{16, 5, 0.2, 0.2};
  Rng rng(5);
  Rrdb<float> block("b", cfg, thinned(5, dropped), rng, 0.1);
  const Tensor<float> x = noise(Shape{1, 16, 24, 24}, rng);
  for (auto _ : state) {
    Graph<float> g;
    ForwardContext<float> ctx(g, false);
    benchmark::DoNotOptimize(block.forward(ctx, g.input(x)).output.value().ptr());
  }
  RrdbMask masks = thinned(5, dropped);
  std::uint64_t macs = 0;
  for (const BlockMask& m : masks) macs += dense_block_macs(16, m, 24, 24);
  state.counters["MACs"] = static_cast<double>(macs);
}
BENCHMARK(BM_RrdbForward)->Arg(0)->Arg(2)->Arg(4)->Arg(8);

void BM_GeneratorForward(benchmark::State& state) {
  GeneratorConfig cfg;
  cfg.n_blocks = static_cast<std::size_t>(state.range(0));
  Generator<float> gen(cfg, 7);
  const SyntheticPair pair = synth_pair(96, 96, 8);
  Rng rng(9);
  const Tensor<float> lr = noise(Shape{1, 3, 24, 24}, rng);
  const Tensor<float> seg = pair.seg.batched();
  gen.calibrate_alpha(lr, seg);
  for (auto _ : state) {
    Graph<float> g;
    ForwardContext<float> ctx(g, false);
    benchmark::DoNotOptimize(gen.forward(ctx, g.input(lr), g.input(seg)).sr.value().ptr());
  }
}
BENCHMARK(BM_GeneratorForward)->Arg(1)->Arg(3)->Unit(benchmark::kMillisecond);

// One PSNR-style training step (forward, L1, backward) at batch 4.
void BM_GeneratorTrainStep(benchmark::State& state) {
  GeneratorConfig cfg;
  cfg.n_blocks = 1;
  Generator<float> gen(cfg, 7);
  Rng rng(10);
  const Tensor<float> lr = noise(Shape{4, 3, 24, 24}, rng);
  const Tensor<float> hr = noise(Shape{4, 3, 96, 96}, rng);
  Tensor<float> seg(Shape{4, kSegChannels, 96, 96}, 1.0f / kSegChannels);
  for (auto _ : state) {
    Graph<float> g;
    ForwardContext<float> ctx(g);
    auto out = gen.forward(ctx, g.input(lr), g.input(seg));
    Var<float> loss = l1_loss(out.sr, g.input(hr));
    g.backward(loss);
    benchmark::DoNotOptimize(loss.value().ptr());
  }
}
BENCHMARK(BM_GeneratorTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
