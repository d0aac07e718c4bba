#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <numeric>
#include <sstream>

#include "segsr/rrsb.hpp"
#include "support.hpp"

namespace segsr {
namespace {

using testing::random_tensor;

DenseBlockConfig cfg(std::size_t c, std::size_t k, double rs = 0.2) { return DenseBlockConfig{c, k, rs, 0.2}; }

// 3x3 kernel whose only nonzero tap is the centre, so a 1x1 map sees a
// plain scalar product.
ConvParams<double> centre_conv(const std::string& name, std::vector<double> centre, double bias) {
  const std::size_t in = centre.size();
  ConvParams<double> p{{name + ".weight", Tensor<double>(Shape{1, in, 3, 3})}, {name + ".bias", Tensor<double>(Shape{1})}};
  for (std::size_t i = 0; i < in; ++i) p.weight.value[i * 9 + 4] = centre[i];
  p.bias.value[0] = bias;
  return p;
}

double lrelu(double v) { return v >= 0 ? v : 0.2 * v; }

TEST(BlockMask, BookkeepingAndRangeChecks) {
  BlockMask m = BlockMask::full(5);
  EXPECT_EQ(m.candidates(), 0u + 1 + 2 + 3 + 4);
  EXPECT_TRUE(m.is_full());
  m.set(4, 2, false);
  EXPECT_EQ(m.kept(4), 2u);
  EXPECT_EQ(m.connections(), 9u);
  EXPECT_FALSE(m.is_full());
  EXPECT_THROW(m.set(3, 3, false), ConfigError);
  EXPECT_THROW(m.keep(6, 1), ConfigError);
  EXPECT_THROW(m.keep(2, 0), ConfigError);
}

TEST(DenseBlock, ZeroInputAndZeroBiasGiveZeros) {
  Rng rng(1);
  DenseBlock<double> block("b", cfg(4, 5), BlockMask::full(5), rng, 1.0);
  Graph<double> g;
  ForwardContext<double> ctx(g);
  auto t = block.forward(ctx, g.input(Tensor<double>(Shape{1, 4, 5, 5})));
  for (const auto& f : t.features)
    for (double v : f.value().data()) EXPECT_EQ(v, 0.0);
  for (double v : t.output.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(DenseBlock, ZeroResidualScaleBypasses) {
  Rng rng(2);
  DenseBlock<double> block("b", cfg(3, 4, 0.0), BlockMask::full(4), rng, 1.0);
  const auto x = random_tensor<double>(Shape{2, 3, 4, 4}, rng);
  Graph<double> g;
  ForwardContext<double> ctx(g);
  auto t = block.forward(ctx, g.input(x));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(t.output.value()[i], x[i]);
}

TEST(DenseBlock, ScalarHandTrace) {
  // x1 = lrelu(0.5 * 2 - 2) = -0.2; x2 = lrelu(0.3 * 2 + 1.0 * -0.2 + 0.1) = 0.5;
  // out = 2 + 0.2 * 0.5.
  DenseBlock<double> block(cfg(1, 2), BlockMask::full(2),
                           {centre_conv("l1", {0.5}, -2.0), centre_conv("l2", {0.3, 1.0}, 0.1)});
  Graph<double> g;
  ForwardContext<double> ctx(g);
  auto t = block.forward(ctx, g.input(Tensor<double>(Shape{1, 1, 1, 1}, 2.0)));
  EXPECT_NEAR(t.features[0].value()[0], -0.2, 1e-15);
  EXPECT_NEAR(t.features[1].value()[0], 0.5, 1e-15);
  EXPECT_NEAR(t.output.value()[0], 2.1, 1e-15);
}

TEST(DenseBlock, RejectsKernelsInconsistentWithMask) {
  BlockMask m = BlockMask::full(2);
  m.set(2, 1, false);
  EXPECT_THROW(DenseBlock<double>(cfg(1, 2), m, {centre_conv("l1", {0.5}, 0), centre_conv("l2", {0.3, 1.0}, 0)}),
               ShapeError);
  EXPECT_NO_THROW(DenseBlock<double>(cfg(1, 2), m, {centre_conv("l1", {0.5}, 0), centre_conv("l2", {0.3}, 0)}));
  EXPECT_THROW(DenseBlock<double>(cfg(1, 1), BlockMask::full(1), {centre_conv("l1", {0.5}, 0)}), ConfigError);
  EXPECT_THROW(DenseBlock<double>(cfg(1, 2, 1.5), BlockMask::full(2), {}), ConfigError);
}

TEST(DenseBlock, DroppingConnectionKeepsShapesChangesValues) {
  Rng r1(3), r2(3);
  BlockMask m = BlockMask::full(4);
  m.set(4, 1, false);
  m.set(3, 2, false);
  DenseBlock<double> dense("b", cfg(3, 4), BlockMask::full(4), r1, 1.0);
  DenseBlock<double> pruned("b", cfg(3, 4), m, r2, 1.0);
  Rng rng(4);
  const auto x = random_tensor<double>(Shape{1, 3, 5, 5}, rng);
  Graph<double> g;
  ForwardContext<double> ctx(g);
  const Tensor<double> a = dense.forward(ctx, g.input(x)).output.value();
  const Tensor<double> b = pruned.forward(ctx, g.input(x)).output.value();
  EXPECT_EQ(a.shape(), b.shape());
  EXPECT_GT(testing::max_abs_diff(a, b), 0.0);
}

TEST(Rrdb, ZeroResidualScaleIsIdentity) {
  Rng rng(5);
  Rrdb<double> r("r", cfg(3, 3, 0.0), RrdbMask{BlockMask::full(3), BlockMask::full(3), BlockMask::full(3)}, rng, 1.0);
  const auto x = random_tensor<double>(Shape{1, 3, 4, 4}, rng);
  Graph<double> g;
  ForwardContext<double> ctx(g);
  auto t = r.forward(ctx, g.input(x));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(t.output.value()[i], x[i]);
}

TEST(Rrdb, ScalarHandTraceThroughThreeBlocks) {
  auto block = [] {
    return DenseBlock<double>(cfg(1, 2), BlockMask::full(2),
                              {centre_conv("l1", {0.5}, -2.0), centre_conv("l2", {0.3, 1.0}, 0.1)});
  };
  Rrdb<double> r(std::array<DenseBlock<double>, 3>{block(), block(), block()});
  auto one = [](double x0) {
    const double x1 = lrelu(0.5 * x0 - 2.0);
    const double x2 = lrelu(0.3 * x0 + x1 + 0.1);
    return x0 + 0.2 * x2;
  };
  const double x = 2.0;
  const double expect = x + 0.2 * one(one(one(x)));
  Graph<double> g;
  ForwardContext<double> ctx(g);
  EXPECT_NEAR(r.forward(ctx, g.input(Tensor<double>(Shape{1, 1, 1, 1}, x))).output.value()[0], expect, 1e-14);
}

TEST(Rrdb, FullMaskIsBitIdenticalToDenseConstruction) {
  Rng r1(6), r2(6);
  const RrdbMask full{BlockMask::full(4), BlockMask::full(4), BlockMask::full(4)};
  RrdbMask explicit_true = full;
  for (auto& m : explicit_true)
    for (std::size_t l = 2; l <= 4; ++l)
      for (std::size_t i = 1; i < l; ++i) m.set(l, i, true);
  Rrdb<float> a("r", cfg(4, 4), full, r1, 0.1);
  Rrdb<float> b("r", cfg(4, 4), explicit_true, r2, 0.1);
  Rng rng(7);
  const auto x = random_tensor<float>(Shape{1, 4, 6, 6}, rng);
  Graph<float> g;
  ForwardContext<float> ctx(g);
  const Tensor<float> ya = a.forward(ctx, g.input(x)).output.value();
  const Tensor<float> yb = b.forward(ctx, g.input(x)).output.value();
  for (std::size_t i = 0; i < ya.size(); ++i) EXPECT_EQ(ya[i], yb[i]);
}

// ---------------------------------------------------------------- dissimilarity

std::vector<double> ds_of(const std::vector<Tensor<double>>& fs) {
  std::vector<const Tensor<double>*> ptrs;
  for (const auto& f : fs) ptrs.push_back(&f);
  return dissimilarity<double>(ptrs);
}

TEST(Dissimilarity, SymmetricDistancesSplitEvenly) {
  const Tensor<double> x3(Shape{2}, {0, 0});
  const auto ds = ds_of({Tensor<double>(Shape{2}, {1, 0}), Tensor<double>(Shape{2}, {0, -1}), x3});
  EXPECT_DOUBLE_EQ(ds[0], 0.5);
  EXPECT_DOUBLE_EQ(ds[1], 0.5);
}

TEST(Dissimilarity, DirectQuotient) {
  // |x1 - x3| = 1, |x2 - x3| = 3.
  const auto ds = ds_of({Tensor<double>(Shape{2}, {1, 1}), Tensor<double>(Shape{2}, {1, 4}), Tensor<double>(Shape{2}, {1, 1}) });
  EXPECT_DOUBLE_EQ(ds[0], 0.0);
  const auto ds2 =
      ds_of({Tensor<double>(Shape{2}, {1, 2}), Tensor<double>(Shape{2}, {1, 4}), Tensor<double>(Shape{2}, {1, 1})});
  EXPECT_DOUBLE_EQ(ds2[0], 0.25);
  EXPECT_DOUBLE_EQ(ds2[1], 0.75);
}

TEST(Dissimilarity, DegenerateIsUniformAndRandomSumsToOne) {
  const Tensor<double> c(Shape{3}, 0.7);
  const auto u = ds_of({c, c, c, c});
  for (double v : u) EXPECT_DOUBLE_EQ(v, 1.0 / 3);
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    std::vector<Tensor<double>> fs;
    const std::size_t l = 2 + rng.index(5);
    for (std::size_t i = 0; i < l; ++i) fs.push_back(random_tensor<double>(Shape{2, 3, 3}, rng));
    const auto ds = ds_of(fs);
    ASSERT_EQ(ds.size(), l - 1);
    EXPECT_NEAR(std::accumulate(ds.begin(), ds.end(), 0.0), 1.0, 1e-12);
    for (double v : ds) EXPECT_GE(v, 0.0);
  }
  EXPECT_THROW(ds_of({c}), ConfigError);
  EXPECT_THROW(ds_of({c, Tensor<double>(Shape{4})}), ShapeError);
}

// ---------------------------------------------------------------- k-means

// Enumerates every nonempty proper subset as the "low" cluster.
KMeansSplit brute_force_kmeans(const std::vector<double>& v) {
  const std::size_t n = v.size();
  KMeansSplit best;
  best.within_ss = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
    std::vector<std::size_t> a, b;
    for (std::size_t i = 0; i < n; ++i) ((mask >> i) & 1 ? a : b).push_back(i);
    auto stats = [&](const std::vector<std::size_t>& idx) {
      double m = 0;
      for (auto i : idx) m += v[i];
      m /= static_cast<double>(idx.size());
      double ss = 0;
      for (auto i : idx) ss += (v[i] - m) * (v[i] - m);
      return std::pair{m, ss};
    };
    auto [ma, sa] = stats(a);
    auto [mb, sb] = stats(b);
    if (sa + sb < best.within_ss - 1e-12) {
      best.within_ss = sa + sb;
      if (ma <= mb) {
        best = {a, b, ma, mb, sa + sb};
      } else {
        best = {b, a, mb, ma, sa + sb};
      }
    }
  }
  return best;
}

TEST(KMeansTwo, WorkedExamples) {
  const std::vector<double> a{0.1, 0.12, 0.5};
  auto s = kmeans_two(a);
  EXPECT_EQ(s.low, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(s.high, (std::vector<std::size_t>{2}));
  EXPECT_NEAR(s.mean_low, 0.11, 1e-15);
  EXPECT_DOUBLE_EQ(s.mean_high, 0.5);

  const std::vector<double> b{0.2, 0.25, 0.3, 0.9, 0.95};
  s = kmeans_two(b);
  EXPECT_EQ(s.low, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(s.high, (std::vector<std::size_t>{3, 4}));

  const std::vector<double> c{0.4, 0.4};
  s = kmeans_two(c);
  EXPECT_EQ(s.low.size(), 1u);
  EXPECT_EQ(s.high.size(), 1u);
  EXPECT_EQ(s.mean_high - s.mean_low, 0.0);

  EXPECT_THROW(kmeans_two(std::vector<double>{0.3}), ConfigError);
}

TEST(KMeansTwo, MatchesExhaustivePartitionSearch) {
  Rng rng(9);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(2 + rng.index(11));
    for (double& x : v) x = rng.uniform();
    const auto got = kmeans_two(v);
    const auto want = brute_force_kmeans(v);
    EXPECT_NEAR(got.within_ss, want.within_ss, 1e-12);
    EXPECT_EQ(got.low, want.low);
    EXPECT_EQ(got.high, want.high);
    EXPECT_LE(got.mean_low, got.mean_high);
  }
}

// ---------------------------------------------------------------- prune decision

TEST(PruneDecision, Examples) {
  auto d = prune_decision(std::vector<double>{0.5, 0.5});
  EXPECT_EQ(d.outcome, PruneOutcome::keep_all);
  EXPECT_EQ(d.keep, (std::vector<bool>{true, true}));

  d = prune_decision(std::vector<double>{0.05, 0.45, 0.5});
  EXPECT_EQ(d.outcome, PruneOutcome::pruned);
  EXPECT_EQ(d.keep, (std::vector<bool>{false, true, true}));

  // (0.52 - 0.48) / 0.52 = 0.0769 >= 0.05.
  d = prune_decision(std::vector<double>{0.48, 0.52});
  EXPECT_EQ(d.keep, (std::vector<bool>{false, true}));

  // (0.51 - 0.49) / 0.51 = 0.039 < 0.05.
  d = prune_decision(std::vector<double>{0.49, 0.51});
  EXPECT_EQ(d.outcome, PruneOutcome::keep_all);

  d = prune_decision(std::vector<double>{1.0});
  EXPECT_EQ(d.outcome, PruneOutcome::too_few);
  EXPECT_EQ(d.keep, std::vector<bool>{true});
}

TEST(PruneDecision, EqualValuesNeverPrune) {
  for (std::size_t n = 2; n <= 8; ++n) {
    const auto d = prune_decision(std::vector<double>(n, 1.0 / static_cast<double>(n)));
    EXPECT_EQ(std::count(d.keep.begin(), d.keep.end(), false), 0) << n;
  }
}

// ---------------------------------------------------------------- statistics

TEST(PruneStats, WindowAveragingAndEviction) {
  const LayerKey k{0, 1, 3};
  PruneStats one(1);
  one.record(k, {0.2, 0.8});
  one.record(k, {0.4, 0.6});
  EXPECT_EQ(one.average(k), (std::vector<double>{0.4, 0.6}));

  PruneStats two(2);
  two.record(k, {0.2, 0.8});
  two.record(k, {0.4, 0.6});
  EXPECT_NEAR(two.average(k)[0], 0.3, 1e-15);
  EXPECT_NEAR(two.average(k)[1], 0.7, 1e-15);
  two.record(k, {0.6, 0.4});
  EXPECT_EQ(two.count(k), 2u);
  EXPECT_NEAR(two.average(k)[0], 0.5, 1e-15);

  EXPECT_THROW(two.record(k, {1.0}), ShapeError);
  EXPECT_THROW(PruneStats(0), ConfigError);
  two.check_shape(k, Shape{1, 4, 3, 3});
  EXPECT_THROW(two.check_shape(k, Shape{1, 4, 3, 4}), ShapeError);
}

TEST(PruneStats, RecordStatsCoversEveryPrunableLayer) {
  Rng rng(10);
  const MaskSet masks = full_masks(2, 4);
  std::vector<Rrdb<double>> trunk;
  for (std::size_t r = 0; r < 2; ++r) trunk.emplace_back("t" + std::to_string(r), cfg(3, 4), masks[r], rng, 1.0);
  PruneStats stats(5);
  for (int it = 0; it < 3; ++it) {
    Graph<double> g;
    ForwardContext<double> ctx(g, false);
    std::vector<RrdbTrace<double>> traces;
    Var<double> x = g.input(random_tensor<double>(Shape{1, 3, 4, 4}, rng));
    for (auto& r : trunk) {
      traces.push_back(r.forward(ctx, x));
      x = traces.back().output;
    }
    record_stats<double>(stats, traces, masks);
  }
  EXPECT_EQ(stats.size(), 2u * 3 * 3);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t l = 2; l <= 4; ++l) {
        const LayerKey k{r, b, l};
        ASSERT_EQ(stats.count(k), 3u);
        const auto avg = stats.average(k);
        EXPECT_EQ(avg.size(), l - 1);
        EXPECT_NEAR(std::accumulate(avg.begin(), avg.end(), 0.0), 1.0, 1e-9);
      }
}

PruneStats uniform_stats(std::size_t rrdbs, std::size_t layers) {
  PruneStats s(1);
  for (std::size_t r = 0; r < rrdbs; ++r)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t l = 2; l <= layers; ++l) s.record({r, b, l}, std::vector<double>(l - 1, 1.0 / double(l - 1)));
  return s;
}

TEST(PruneNetwork, KeepAllLeavesMasksAndMacsUnchanged) {
  const auto res = prune_network(uniform_stats(2, 5), 0.05, 2, 5, 8, 6, 6);
  EXPECT_EQ(res.masks, full_masks(2, 5));
  EXPECT_EQ(res.report.macs_before, res.report.macs_after);
  EXPECT_EQ(res.report.removed(), 0u);
  EXPECT_EQ(res.report.layers.size(), 2u * 3 * 4);
}

TEST(PruneNetwork, MissingStatisticsRejected) {
  PruneStats s = uniform_stats(1, 5);
  EXPECT_THROW(prune_network(s, 0.05, 2, 5, 8, 6, 6), ConfigError);
}

TEST(PruneNetwork, OneDroppedConnectionCostsOneConvInput) {
  PruneStats s = uniform_stats(1, 5);
  PruneStats forced(1);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t l = 2; l <= 5; ++l) {
      std::vector<double> v(l - 1, 1.0 / double(l - 1));
      if (b == 1 && l == 3) v = {0.1, 0.9};
      forced.record({0, b, l}, v);
    }
  const std::size_t c = 4, h = 5, w = 7;
  const auto res = prune_network(forced, 0.05, 1, 5, c, h, w);
  EXPECT_FALSE(res.masks[0][1].keep(3, 1));
  EXPECT_EQ(res.report.removed(), 1u);
  const std::uint64_t per_connection = std::uint64_t{h} * w * 9 * c * c;
  EXPECT_EQ(res.report.macs_before - res.report.macs_after, per_connection);

  // Count MACs by actually running both trunks.
  auto run = [&](const MaskSet& m) {
    Rng rng(11);
    Rrdb<float> r("t", cfg(c, 5), m[0], rng, 0.1);
    Graph<float> g;
    ForwardContext<float> ctx(g, false);
    r.forward(ctx, g.input(Tensor<float>(Shape{1, c, h, w}, 0.5f)));
    return g.macs();
  };
  EXPECT_EQ(run(full_masks(1, 5)), res.report.macs_before);
  EXPECT_EQ(run(res.masks), res.report.macs_after);

  std::size_t kept = 0;
  for (const auto& m : res.masks[0]) kept += m.connections();
  EXPECT_EQ(kept, res.report.connections_after);
}

TEST(PruneNetwork, MacsMonotoneInMask) {
  Rng rng(12);
  for (int t = 0; t < 30; ++t) {
    BlockMask m = BlockMask::full(5);
    bool any = false;
    for (std::size_t l = 2; l <= 5; ++l)
      for (std::size_t i = 1; i < l; ++i)
        if (rng.bernoulli(0.3)) {
          m.set(l, i, false);
          any = true;
        }
    const auto dense = dense_block_macs(8, BlockMask::full(5), 4, 4);
    const auto pruned = dense_block_macs(8, m, 4, 4);
    if (any) {
      EXPECT_LT(pruned, dense);
    } else {
      EXPECT_EQ(pruned, dense);
    }
  }
}

TEST(PruneNetwork, ReportsWriteEveryLayer) {
  const auto res = prune_network(uniform_stats(1, 3), 0.05, 1, 3, 4, 2, 2);
  std::ostringstream text, kv;
  write_report_text(text, res.report);
  write_report_kv(kv, res.report);
  EXPECT_NE(text.str().find("rrdb0.block2.layer3"), std::string::npos);
  EXPECT_NE(kv.str().find("connections_removed=0"), std::string::npos);
}

}  // namespace
}  // namespace segsr
