#include "segsr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <string>

namespace segsr {

Model::Model(const GeneratorConfig& g, const DiscriminatorConfig& d, std::uint64_t seed, MaskSet masks)
    : generator(g, seed, std::move(masks)), discriminator(d, seed ^ 0x5bd1e995ULL) {}

void begin_gan_phase(Model& m) {
  m.phase = Phase::gan;
  m.iteration = 0;
  m.opt_g.reset();
  m.opt_d.reset();
}

void write_loss_header(std::ostream& os) {
  os << "iteration,phase,l1,g_adv,g_total,d_loss,d_real,d_fake,lr_rest,lr_attention\n";
}

void write_loss_row(std::ostream& os, const LossRecord& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf, "%llu,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                static_cast<unsigned long long>(r.iteration), std::string(to_string(r.phase)).c_str(), r.l1, r.g_adv,
                r.g_total, r.d_loss, r.d_real, r.d_fake, r.lr_rest, r.lr_attention);
  os << buf;
}

std::uint64_t batch_seed(std::uint64_t seed, Phase phase, std::uint64_t iteration) {
  // splitmix64 finaliser over the combined key
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (2 * iteration + 1 + (phase == Phase::gan ? 1ULL << 62 : 0));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

double mean_of(const Tensor<float>& t) {
  double s = 0.0;
  for (float v : t.data()) s += v;
  return s / static_cast<double>(t.size());
}

[[noreturn]] void abort_non_finite(Model& model, const LossRecord& rec, const std::filesystem::path& dir) {
  const auto path = dir / ("nan_dump_" + std::string(to_string(rec.phase)) + "_" + std::to_string(rec.iteration) + ".txt");
  std::ofstream os(path);
  if (os) {
    os << "phase=" << to_string(rec.phase) << "\niteration=" << rec.iteration << "\n";
    write_loss_header(os);
    write_loss_row(os, rec);
    auto dump = [&](const char* prefix, const std::vector<Parameter<float>*>& params) {
      for (const Parameter<float>* p : params) {
        std::size_t bad = 0;
        double max_abs = 0.0;
        for (float v : p->value.data()) {
          if (!std::isfinite(v)) {
            ++bad;
          } else {
            max_abs = std::max(max_abs, static_cast<double>(std::abs(v)));
          }
        }
        os << prefix << p->name << " shape=" << p->value.shape().str() << " non_finite=" << bad
           << " max_abs=" << max_abs << "\n";
      }
    };
    dump("g.", model.generator.parameters());
    dump("d.", model.discriminator.parameters());
  }
  throw NumericalError("non-finite loss at " + std::string(to_string(rec.phase)) + " iteration " +
                       std::to_string(rec.iteration) + "; state dumped to " + path.string());
}

void apply(Adam<float>& opt, Graph<float>& g, const ForwardContext<float>& ctx, const TrainSchedule& s,
           std::uint64_t it) {
  opt.begin_step();
  for (const auto& b : ctx.bindings()) opt.update(*b.param, g.grad(b.node), s.lr(b.param->group, it));
}

void psnr_step(Model& model, const Batch& batch, const TrainSchedule& s, LossRecord& rec) {
  Graph<float> g;
  ForwardContext<float> ctx(g);
  ctx.freeze(ParamGroup::attention);
  typename Generator<float>::ForwardOptions fo;
  fo.spsa_enabled = false;
  auto out = model.generator.forward(ctx, g.input(batch.lr), g.input(batch.seg), fo);
  Var<float> loss = l1_loss(out.sr, g.input(batch.hr));
  rec.l1 = rec.g_total = loss.value()[0];
  if (!std::isfinite(rec.l1)) return;
  g.backward(loss);
  apply(model.opt_g, g, ctx, s, rec.iteration);
}

void gan_step(Model& model, const Batch& batch, const TrainOptions& o, LossRecord& rec) {
  const TrainSchedule& s = o.schedule;
  if (!model.generator.alpha_calibrated()) model.generator.calibrate_alpha(batch.lr, batch.seg);

  // Discriminator update on a detached generator output.
  {
    Graph<float> g;
    ForwardContext<float> frozen_g(g, false);
    Var<float> sr = model.generator.forward(frozen_g, g.input(batch.lr), g.input(batch.seg)).sr;
    ForwardContext<float> ctx(g);
    Var<float> real = model.discriminator.forward(ctx, g.input(batch.hr));
    Var<float> fake = model.discriminator.forward(ctx, g.input(sr.value()));
    Var<float> loss = gan_losses(real, fake, o.gan_loss).d_loss;
    rec.d_loss = loss.value()[0];
    rec.d_real = mean_of(real.value());
    rec.d_fake = mean_of(fake.value());
    if (!std::isfinite(rec.d_loss) || !real.value().all_finite() || !fake.value().all_finite()) {
      rec.d_loss = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    g.backward(loss);
    apply(model.opt_d, g, ctx, s, rec.iteration);
  }

  // Generator update against the fixed discriminator.
  Graph<float> g;
  ForwardContext<float> ctx(g);
  auto out = model.generator.forward(ctx, g.input(batch.lr), g.input(batch.seg));
  ForwardContext<float> frozen_d(g, false);
  Var<float> real = model.discriminator.forward(frozen_d, g.input(batch.hr));
  Var<float> fake = model.discriminator.forward(frozen_d, out.sr);
  Var<float> l1 = l1_loss(out.sr, g.input(batch.hr));
  Var<float> adv = gan_losses(real, fake, o.gan_loss).g_loss;
  Var<float> total = add(scale(l1, static_cast<float>(s.lambda_l1)), scale(adv, static_cast<float>(s.lambda_gan)));
  rec.l1 = l1.value()[0];
  rec.g_adv = adv.value()[0];
  rec.g_total = total.value()[0];
  if (!std::isfinite(rec.g_total)) return;
  g.backward(total);
  apply(model.opt_g, g, ctx, s, rec.iteration);
}

}  // namespace

std::vector<LossRecord> train(Model& model, const Dataset& data, const TrainOptions& opts) {
  const TrainSchedule& s = opts.schedule;
  s.validate();
  if (s.phase != model.phase) {
    throw ConfigError("train: schedule phase " + std::string(to_string(s.phase)) + " does not match model phase " +
                      std::string(to_string(model.phase)));
  }
  const AdamOptions adam{s.beta1, s.beta2, 1e-8};
  model.opt_g.set_options(adam);
  model.opt_d.set_options(adam);
  std::vector<LossRecord> trace;
  for (; model.iteration < s.iterations; ++model.iteration) {
    LossRecord rec;
    rec.iteration = model.iteration;
    rec.phase = s.phase;
    rec.lr_rest = s.lr(ParamGroup::rest, model.iteration);
    rec.lr_attention = s.lr(ParamGroup::attention, model.iteration);
    Rng rng(batch_seed(s.seed, s.phase, model.iteration));
    const Batch batch = sample_batch(data, s.batch_size, rng);
    if (s.phase == Phase::psnr_pretrain) {
      psnr_step(model, batch, s, rec);
    } else {
      gan_step(model, batch, opts, rec);
    }
    if (!std::isfinite(rec.l1) || !std::isfinite(rec.g_total) || !std::isfinite(rec.d_loss) ||
        !std::isfinite(rec.g_adv)) {
      abort_non_finite(model, rec, opts.dump_dir);
    }
    trace.push_back(rec);
    if (opts.on_iteration) opts.on_iteration(rec);
  }
  return trace;
}

Tensor<float> infer(Generator<float>& gen, const Tensor<float>& lr, const Tensor<float>& seg) {
  Graph<float> g;
  ForwardContext<float> ctx(g, false);
  Tensor<float> sr = gen.forward(ctx, g.input(lr), g.input(seg)).sr.value();
  for (float& v : sr.data()) v = std::clamp(v, 0.0f, 1.0f);
  return sr;
}

AttentionState infer_attention(Generator<float>& gen, const Tensor<float>& lr, const Tensor<float>& seg) {
  Graph<float> g;
  ForwardContext<float> ctx(g, false);
  auto out = gen.forward(ctx, g.input(lr), g.input(seg));
  return attention_state<float>(*out.attention, 0, lr.dim(2), lr.dim(3));
}

}  // namespace segsr
