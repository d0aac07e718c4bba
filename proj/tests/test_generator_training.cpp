#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "segsr/checkpoint.hpp"
#include "segsr/grad_check.hpp"
#include "segsr/trainer.hpp"
#include "support.hpp"

namespace segsr {
namespace {

using testing::random_tensor;
using testing::TempDir;

GeneratorConfig tiny_gen(std::size_t blocks = 1, std::size_t c = 4, std::size_t k = 3) {
  GeneratorConfig g;
  g.n_blocks = blocks;
  g.channels = g.block_channels = c;
  g.block_layers = k;
  return g;
}

DiscriminatorConfig tiny_disc(std::size_t size = 16) {
  DiscriminatorConfig d;
  d.input_size = size;
  d.base_channels = 2;
  d.stages = 2;
  d.hidden = 4;
  return d;
}

Tensor<double> seg_for(std::size_t b, std::size_t h, std::size_t w) {
  const Tensor<float> one = SegProbMap::uniform(h, w).batched();
  Tensor<double> s(Shape{b, 8, h, w});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t k = 0; k < one.size(); ++k) s[i * one.size() + k] = one[k];
  return s;
}

// ---------------------------------------------------------------- generator

TEST(Generator, OutputIsFourTimesInput) {
  Generator<double> gen(tiny_gen(), 1);
  Rng rng(1);
  Graph<double> g;
  ForwardContext<double> ctx(g);
  auto out = gen.forward(ctx, g.input(random_tensor<double>(Shape{2, 3, 3, 5}, rng, 0, 1)), g.input(seg_for(2, 12, 20)));
  EXPECT_EQ(out.sr.shape(), Shape({2, 3, 12, 20}));
  EXPECT_EQ(out.features.shape(), Shape({2, 4, 3, 5}));
}

TEST(Generator, RejectsMismatchedSegmentationAndBadConfig) {
  Generator<double> gen(tiny_gen(), 1);
  Graph<double> g;
  ForwardContext<double> ctx(g);
  EXPECT_THROW(gen.forward(ctx, g.input(Tensor<double>(Shape{1, 3, 4, 4})), g.input(seg_for(1, 12, 16))), ShapeError);
  GeneratorConfig bad = tiny_gen();
  bad.n_blocks = 0;
  EXPECT_THROW(Generator<double>(bad, 1), ConfigError);
  bad = tiny_gen();
  bad.upscale = 2;
  EXPECT_THROW(Generator<double>(bad, 1), ConfigError);
  bad = tiny_gen();
  bad.block_channels = 8;
  EXPECT_THROW(Generator<double>(bad, 1), ConfigError);
}

TEST(Generator, ZeroResidualScalesBypassTrunkAndAttention) {
  GeneratorConfig cfg = tiny_gen(2);
  cfg.res_scale = 0.0;
  Generator<double> a(cfg, 7), b(cfg, 8);
  // Same head/up/tail weights, different trunk and attention weights.
  auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const std::string& n = pa[i]->name;
    if (n.rfind("head", 0) == 0 || n.rfind("up", 0) == 0 || n.rfind("tail", 0) == 0) pb[i]->value = pa[i]->value;
  }
  Rng rng(2);
  const auto lr = random_tensor<double>(Shape{1, 3, 4, 4}, rng, 0, 1);
  Graph<double> g;
  ForwardContext<double> ctx(g);
  const Tensor<double> ya = a.forward(ctx, g.input(lr), g.input(seg_for(1, 16, 16))).sr.value();
  const Tensor<double> yb = b.forward(ctx, g.input(lr), g.input(seg_for(1, 16, 16))).sr.value();
  EXPECT_EQ(testing::max_abs_diff(ya, yb), 0.0);
}

std::size_t expected_parameter_count(const GeneratorConfig& cfg) {
  const std::size_t c = cfg.channels, k = cfg.block_layers;
  const std::size_t conv3 = 9 * c * c + c;
  const std::size_t head = 9 * 3 * c + c;
  const std::size_t block = 9 * c * c * k * (k + 1) / 2 + k * c;
  const std::size_t spsa = 5 * c * c + c * 8 * 16 + 2;
  const std::size_t tail = conv3 + 9 * c * 3 + 3;
  return head + cfg.n_blocks * 3 * block + spsa + 2 * conv3 + tail;
}

TEST(Generator, ParameterCountMatchesClosedForm) {
  for (auto cfg : {tiny_gen(1, 4, 2), tiny_gen(3, 16, 5), tiny_gen(2, 8, 4)}) {
    Generator<float> gen(cfg, 0);
    EXPECT_EQ(gen.parameter_count(), expected_parameter_count(cfg));
  }
}

TEST(Generator, PartitionIsTotalAndDisjoint) {
  Generator<float> gen(tiny_gen(), 0);
  std::set<std::string> names;
  std::size_t attention = 0;
  for (Parameter<float>* p : gen.parameters()) {
    EXPECT_TRUE(names.insert(p->name).second) << p->name;
    const bool in_spsa = p->name.rfind("spsa.", 0) == 0;
    EXPECT_EQ(p->group == ParamGroup::attention, in_spsa) << p->name;
    attention += in_spsa;
  }
  EXPECT_EQ(attention, 8u);
}

TEST(Generator, MaskedTrunkShrinksParameters) {
  MaskSet masks = full_masks(1, 3);
  masks[0][0].set(3, 1, false);
  Generator<float> dense(tiny_gen(), 0), pruned(tiny_gen(), 0, masks);
  EXPECT_EQ(dense.parameter_count() - pruned.parameter_count(), 9u * 4 * 4);
  EXPECT_EQ(pruned.masks(), masks);
}

// ---------------------------------------------------------------- discriminator

TEST(Discriminator, OneLogitPerImage) {
  Discriminator<double> d(tiny_disc(), 3);
  Rng rng(3);
  Graph<double> g;
  ForwardContext<double> ctx(g);
  EXPECT_EQ(d.forward(ctx, g.input(random_tensor<double>(Shape{2, 3, 16, 16}, rng))).shape(), Shape({2, 1}));
  EXPECT_THROW(d.forward(ctx, g.input(Tensor<double>(Shape{1, 3, 12, 12}))), ShapeError);
  DiscriminatorConfig bad = tiny_disc(18);
  EXPECT_THROW(Discriminator<double>(bad, 0), ConfigError);
}

TEST(Discriminator, ZeroFinalLayerGivesBias) {
  Discriminator<double> d(tiny_disc(), 3);
  d.final_layer().weight.value.fill(0.0);
  d.final_layer().bias.value[0] = -0.75;
  Rng rng(4);
  Graph<double> g;
  ForwardContext<double> ctx(g);
  for (double v : d.forward(ctx, g.input(random_tensor<double>(Shape{3, 3, 16, 16}, rng))).value().data()) {
    EXPECT_EQ(v, -0.75);
  }
}

TEST(Discriminator, GradientsMatchFiniteDifferences) {
  DiscriminatorConfig cfg = tiny_disc(8);
  cfg.stages = 1;
  Discriminator<double> d(cfg, 5);
  Rng rng(5);
  Parameter<double> img{"img", random_tensor<double>(Shape{2, 3, 8, 8}, rng, 0, 1)};
  auto ps = d.parameters();
  ps.push_back(&img);
  auto r = finite_diff_check(
      [&](ForwardContext<double>& c) {
        auto logits = d.forward(c, c.bind(img));
        return gan_losses(logits, scale(logits, -0.5)).d_loss;
      },
      ps, FiniteDiffOptions{1e-5, 40, 1});
  EXPECT_LE(r.max_rel_error, 1e-5) << r.worst_param << "[" << r.worst_index << "]";
}

// ---------------------------------------------------------------- losses

TEST(Losses, L1Examples) {
  Graph<double> g;
  Rng rng(6);
  const auto a = random_tensor<double>(Shape{1, 3, 4, 4}, rng);
  Tensor<double> b = a;
  for (double& v : b.data()) v -= 0.1;
  EXPECT_EQ(l1_loss(g.input(a), g.input(a)).value()[0], 0.0);
  EXPECT_NEAR(l1_loss(g.input(a), g.input(b)).value()[0], 0.1, 1e-12);
}

TEST(Losses, GanLossesAtZeroLogits) {
  Graph<double> g;
  const Tensor<double> z(Shape{4, 1});
  const auto l = gan_losses(g.input(z), g.input(z));
  EXPECT_NEAR(l.d_loss.value()[0], 2 * std::log(2.0), 1e-15);
  EXPECT_NEAR(l.g_loss.value()[0], std::log(2.0), 1e-15);
  const auto r = gan_losses(g.input(z), g.input(z), GanLossKind::relativistic);
  EXPECT_NEAR(r.d_loss.value()[0], 2 * std::log(2.0), 1e-15);
  EXPECT_NEAR(r.g_loss.value()[0], 2 * std::log(2.0), 1e-15);
  EXPECT_THROW(parse_gan_loss("hinge"), ConfigError);
}

TEST(Losses, StandardLossMatchesScalarFormula) {
  Graph<double> g;
  const Tensor<double> real(Shape{2, 1}, {1.5, -0.5}), fake(Shape{2, 1}, {0.25, -2.0});
  auto sp = [](double x) { return std::log1p(std::exp(x)); };
  const auto l = gan_losses(g.input(real), g.input(fake));
  EXPECT_NEAR(l.d_loss.value()[0], (sp(-1.5) + sp(0.5)) / 2 + (sp(0.25) + sp(-2.0)) / 2, 1e-14);
  EXPECT_NEAR(l.g_loss.value()[0], (sp(-0.25) + sp(2.0)) / 2, 1e-14);
}

// ---------------------------------------------------------------- optimiser and schedule

TEST(Schedule, StepDecayHalvesEveryInterval) {
  const StepDecay d{2e-4, 2.0, 2};
  const double want[] = {2e-4, 2e-4, 1e-4, 1e-4, 5e-5, 5e-5, 2.5e-5};
  for (std::uint64_t i = 0; i < 7; ++i) EXPECT_DOUBLE_EQ(d.at(i), want[i]) << i;
}

TEST(Schedule, ValidationAndGroups) {
  TrainSchedule s;
  s.lr_rest = 1e-4;
  s.lr_attention = 5e-4;
  s.decay_interval = 100;
  EXPECT_DOUBLE_EQ(s.lr(ParamGroup::attention, 150), 2.5e-4);
  EXPECT_DOUBLE_EQ(s.lr(ParamGroup::rest, 99), 1e-4);
  s.decay_factor = 1.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s.decay_factor = 2.0;
  s.lr_rest = 0.0;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_EQ(parse_phase("gan"), Phase::gan);
  EXPECT_THROW(parse_phase("warmup"), ConfigError);
}

TEST(Adam, FirstStepMagnitudeEqualsLearningRate) {
  // Loss x^2 / 2 has gradient x; from x = 1 the bias-corrected first step
  // is lr * g / (|g| + eps).
  for (double scale_g : {1.0, 1e-3, 250.0}) {
    Adam<double> opt;
    Parameter<double> x{"x", Tensor<double>(Shape{1}, 1.0)};
    opt.begin_step();
    opt.update(x, Tensor<double>(Shape{1}, scale_g * 1.0), 0.1);
    EXPECT_NEAR(x.value[0], 0.9, 1e-6) << scale_g;
  }
}

TEST(Adam, SecondStepClosedForm) {
  Adam<double> opt;
  Parameter<double> x{"x", Tensor<double>(Shape{1}, 1.0)};
  const double lr = 0.1, b1 = 0.9, b2 = 0.999;
  opt.begin_step();
  opt.update(x, Tensor<double>(Shape{1}, x.value[0]), lr);
  const double g2 = x.value[0];
  opt.begin_step();
  opt.update(x, Tensor<double>(Shape{1}, g2), lr);
  const double m = (b1 * (1 - b1) * 1.0 + (1 - b1) * g2) / (1 - b1 * b1);
  const double v = (b2 * (1 - b2) * 1.0 + (1 - b2) * g2 * g2) / (1 - b2 * b2);
  EXPECT_NEAR(x.value[0], g2 - lr * m / (std::sqrt(v) + 1e-8), 1e-12);
}

// ---------------------------------------------------------------- training

struct TrainFixture : ::testing::Test {
  TempDir dir{"train"};
  Dataset data{testing::write_synthetic_set(dir.path(), 4, 32, 16, 11)};

  TrainSchedule schedule(Phase phase, std::uint64_t iterations) const {
    TrainSchedule s;
    s.phase = phase;
    s.lr_rest = 1e-3;
    s.lr_attention = 1e-3;
    s.decay_interval = 1000;
    s.batch_size = 2;
    s.iterations = iterations;
    s.seed = 4;
    return s;
  }
  TrainOptions options(Phase phase, std::uint64_t iterations) const {
    TrainOptions o;
    o.schedule = schedule(phase, iterations);
    o.dump_dir = dir.path();
    return o;
  }
  static Model model() { return Model(tiny_gen(), tiny_disc(), 21); }
};

std::string trace_csv(const std::vector<LossRecord>& t) {
  std::ostringstream os;
  write_loss_header(os);
  for (const auto& r : t) write_loss_row(os, r);
  return os.str();
}

TEST_F(TrainFixture, SameSeedGivesIdenticalTraces) {
  Model a = model(), b = model();
  const auto ta = train(a, data, options(Phase::psnr_pretrain, 3));
  const auto tb = train(b, data, options(Phase::psnr_pretrain, 3));
  EXPECT_EQ(trace_csv(ta), trace_csv(tb));
  ASSERT_EQ(ta.size(), 3u);
  EXPECT_EQ(trace_csv(ta).substr(0, 74), "iteration,phase,l1,g_adv,g_total,d_loss,d_real,d_fake,lr_rest,lr_attention");
}

TEST_F(TrainFixture, PretrainLeavesAttentionUntouched) {
  Model m = model();
  std::vector<Tensor<float>> before;
  for (auto* p : m.generator.spsa().params().all()) before.push_back(p->value);
  train(m, data, options(Phase::psnr_pretrain, 2));
  auto after = m.generator.spsa().params().all();
  for (std::size_t i = 0; i < after.size(); ++i) EXPECT_EQ(testing::max_abs_diff(after[i]->value, before[i]), 0.0);
}

TEST_F(TrainFixture, ResumeMatchesUninterruptedRun) {
  Model whole = model();
  const auto full = train(whole, data, options(Phase::psnr_pretrain, 4));
  Model part = model();
  train(part, data, options(Phase::psnr_pretrain, 2));
  const auto path = dir / "mid.ckpt";
  save_checkpoint(path, capture(part));
  Model resumed = restore(load_checkpoint(path));
  const auto rest = train(resumed, data, options(Phase::psnr_pretrain, 4));
  ASSERT_EQ(rest.size(), 2u);
  EXPECT_EQ(trace_csv(rest), trace_csv({full.begin() + 2, full.end()}));
}

TEST_F(TrainFixture, GanStepUpdatesBothGroups) {
  Model m = model();
  train(m, data, options(Phase::psnr_pretrain, 1));
  begin_gan_phase(m);
  std::vector<Tensor<float>> before;
  auto params = m.generator.parameters();
  for (auto* p : params) before.push_back(p->value);
  const auto trace = train(m, data, options(Phase::gan, 1));
  ASSERT_EQ(trace.size(), 1u);
  EXPECT_GT(trace[0].l1, 0.0);
  EXPECT_GT(trace[0].g_adv, 0.0);
  EXPECT_TRUE(m.generator.alpha_calibrated());
  double moved[2] = {0, 0};
  for (std::size_t i = 0; i < params.size(); ++i) {
    moved[static_cast<int>(params[i]->group)] += testing::max_abs_diff(params[i]->value, before[i]);
  }
  EXPECT_GT(moved[0], 0.0);
  EXPECT_GT(moved[1], 0.0);
}

TEST_F(TrainFixture, PhaseMismatchRejected) {
  Model m = model();
  EXPECT_THROW(train(m, data, options(Phase::gan, 1)), ConfigError);
}

TEST_F(TrainFixture, NonFiniteLossAbortsWithDump) {
  Model m = model();
  for (auto* p : m.generator.parameters())
    if (p->name == "tail1.bias") p->value[0] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(train(m, data, options(Phase::psnr_pretrain, 2)), NumericalError);
  const std::string dump = testing::slurp(dir / "nan_dump_psnr_pretrain_0.txt");
  EXPECT_NE(dump.find("tail1.bias"), std::string::npos);
  EXPECT_NE(dump.find("non_finite=1"), std::string::npos);
}

// ---------------------------------------------------------------- checkpoints and inference

TEST_F(TrainFixture, CheckpointRoundTripIsByteIdentical) {
  Model m = model();
  train(m, data, options(Phase::psnr_pretrain, 2));
  begin_gan_phase(m);
  train(m, data, options(Phase::gan, 1));
  const auto p1 = dir / "a.ckpt", p2 = dir / "b.ckpt";
  save_checkpoint(p1, capture(m, "seed = 4\n"));
  save_checkpoint(p2, load_checkpoint(p1));
  const std::string a = testing::slurp(p1), b = testing::slurp(p2);
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.substr(0, 4), "SPSA");
  Model r = restore(load_checkpoint(p1));
  EXPECT_EQ(r.phase, Phase::gan);
  EXPECT_EQ(r.iteration, 1u);
  EXPECT_EQ(r.opt_g.steps(), m.opt_g.steps());
}

TEST_F(TrainFixture, CorruptCheckpointsRejected) {
  Model m = model();
  const auto p = dir / "c.ckpt";
  save_checkpoint(p, capture(m));
  std::string bytes = testing::slurp(p);
  {
    std::ofstream(dir / "trunc.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    std::ofstream(dir / "magic.ckpt", std::ios::binary) << "XXXX" << bytes.substr(4);
    std::ofstream(dir / "tail.ckpt", std::ios::binary) << bytes << "extra";
  }
  EXPECT_THROW(load_checkpoint(dir / "trunc.ckpt"), IoError);
  EXPECT_THROW(load_checkpoint(dir / "magic.ckpt"), IoError);
  EXPECT_THROW(load_checkpoint(dir / "tail.ckpt"), IoError);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), IoError);
  Checkpoint ck = capture(m);
  ck.params.pop_back();
  EXPECT_THROW(restore(ck), IoError);
}

TEST(Infer, ClampedDeterministicAndFinite) {
  Generator<float> gen(tiny_gen(), 9);
  const Tensor<float> lr(Shape{1, 3, 5, 6}, 0.5f);
  const Tensor<float> seg = SegProbMap::uniform(20, 24).batched();
  const Tensor<float> a = infer(gen, lr, seg), b = infer(gen, lr, seg);
  EXPECT_EQ(a.shape(), Shape({1, 3, 20, 24}));
  EXPECT_TRUE(a.all_finite());
  for (float v : a.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_EQ(testing::max_abs_diff(a, b), 0.0);
  EXPECT_THROW(infer(gen, lr, SegProbMap::uniform(20, 20).batched()), ShapeError);
}

}  // namespace
}  // namespace segsr
