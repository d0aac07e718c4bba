#include "segsr/generator.hpp"

#include <string>

namespace segsr {

namespace {

constexpr double kTrunkInitGain = 0.1;

template <typename T>
ConvParams<T> make_conv(const std::string& name, std::size_t out, std::size_t in, std::size_t k, Rng& rng,
                        double gain = 1.0) {
  ConvParams<T> p{{name + ".weight", Tensor<T>(Shape{out, in, k, k})}, {name + ".bias", Tensor<T>(Shape{out})}};
  init_uniform(p.weight.value, rng, gain);
  return p;
}

template <typename T>
ConvParams<T> make_dense(const std::string& name, std::size_t out, std::size_t in, Rng& rng) {
  ConvParams<T> p{{name + ".weight", Tensor<T>(Shape{out, in})}, {name + ".bias", Tensor<T>(Shape{out})}};
  init_uniform(p.weight.value, rng);
  return p;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (n_blocks < 1) throw ConfigError("generator: n_blocks must be >= 1");
  if (upscale != 4) throw ConfigError("generator: upscale factor is fixed at 4, got " + std::to_string(upscale));
  if (channels == 0) throw ConfigError("generator: channels must be positive");
  if (block_channels != channels) {
    throw ConfigError("generator: block_channels (" + std::to_string(block_channels) + ") must equal channels (" +
                      std::to_string(channels) + ")");
  }
  if (max_attention_positions == 0) throw ConfigError("generator: max_attention_positions must be positive");
  block_config().validate();
}

DenseBlockConfig GeneratorConfig::block_config() const {
  return DenseBlockConfig{block_channels, block_layers, res_scale, slope};
}

namespace {

const GeneratorConfig& validated(const GeneratorConfig& cfg) {
  cfg.validate();
  return cfg;
}

MaskSet masks_or_full(MaskSet masks, const GeneratorConfig& cfg) {
  if (masks.empty()) return full_masks(cfg.n_blocks, cfg.block_layers);
  if (masks.size() != cfg.n_blocks) throw ConfigError("generator: mask set does not match n_blocks");
  return masks;
}

template <typename T>
std::vector<Rrdb<T>> make_trunk(const GeneratorConfig& cfg, const MaskSet& masks, Rng& rng) {
  std::vector<Rrdb<T>> out;
  for (std::size_t r = 0; r < cfg.n_blocks; ++r) {
    out.emplace_back("trunk" + std::to_string(r), cfg.block_config(), masks[r], rng, kTrunkInitGain);
  }
  return out;
}

}  // namespace

template <typename T>
Generator<T>::Generator(GeneratorConfig cfg, std::uint64_t seed, MaskSet masks)
    : Generator(validated(cfg), masks_or_full(std::move(masks), cfg), Rng(seed)) {}

// Members are initialised in declaration order, which fixes the order in
// which they draw from `rng`.
template <typename T>
Generator<T>::Generator(const GeneratorConfig& cfg, const MaskSet& masks, Rng&& rng)
    : cfg_(cfg),
      head_(make_conv<T>("head", cfg.channels, 3, 3, rng)),
      rrdbs_(make_trunk<T>(cfg, masks, rng)),
      spsa_(cfg.channels, SpsaOptions{cfg.spsa_residual, cfg.max_attention_positions}, rng),
      up_{make_conv<T>("up0", cfg.channels, cfg.channels, 3, rng), make_conv<T>("up1", cfg.channels, cfg.channels, 3, rng)},
      tail_{make_conv<T>("tail0", cfg.channels, cfg.channels, 3, rng), make_conv<T>("tail1", 3, cfg.channels, 3, rng)} {}

template <typename T>
Var<T> Generator<T>::conv(ForwardContext<T>& ctx, const Var<T>& x, ConvParams<T>& p) {
  return bias_add(conv2d(x, ctx.bind(p.weight), Conv2dOptions{1, 1}), ctx.bind(p.bias));
}

template <typename T>
std::pair<Var<T>, std::vector<RrdbTrace<T>>> Generator<T>::trunk(ForwardContext<T>& ctx, const Var<T>& lr) {
  const Shape& s = lr.shape();
  if (s.rank() != 4 || s[1] != 3) throw ShapeError("generator: expected (B, 3, h, w) input, got " + s.str());
  Var<T> x = conv(ctx, lr, head_);
  std::vector<RrdbTrace<T>> traces;
  for (Rrdb<T>& r : rrdbs_) {
    traces.push_back(r.forward(ctx, x));
    x = traces.back().output;
  }
  return {x, std::move(traces)};
}

template <typename T>
typename Generator<T>::Output Generator<T>::forward(ForwardContext<T>& ctx, const Var<T>& lr, const Var<T>& seg,
                                                    const ForwardOptions& opts) {
  const Shape& ls = lr.shape();
  const Shape& ss = seg.shape();
  if (ls.rank() != 4 || ss.rank() != 4 || ss[0] != ls[0] || ss[1] != kSegChannels || ss[2] != ls[2] * cfg_.upscale ||
      ss[3] != ls[3] * cfg_.upscale) {
    throw ShapeError("generator: segmentation map " + ss.str() + " must be (B, 8, 4h, 4w) for input " + ls.str());
  }
  Output out;
  auto [features, traces] = trunk(ctx, lr);
  out.features = features;
  out.trunk = std::move(traces);
  Var<T> x = features;
  if (opts.spsa_enabled) {
    out.attention = spsa_.forward(ctx, x, seg, opts.forced_attention);
    x = out.attention->y;
  }
  const T slope = static_cast<T>(cfg_.slope);
  for (ConvParams<T>& p : up_) x = leaky_relu(conv(ctx, upsample_nearest(x, 2), p), slope);
  x = leaky_relu(conv(ctx, x, tail_[0]), slope);
  out.sr = conv(ctx, x, tail_[1]);
  return out;
}

template <typename T>
MaskSet Generator<T>::masks() const {
  MaskSet m;
  for (const Rrdb<T>& r : rrdbs_) m.push_back(r.masks());
  return m;
}

template <typename T>
std::vector<Parameter<T>*> Generator<T>::parameters() {
  std::vector<Parameter<T>*> out{&head_.weight, &head_.bias};
  for (Rrdb<T>& r : rrdbs_) r.append_parameters(out);
  for (Parameter<T>* p : spsa_.params().all()) out.push_back(p);
  for (ConvParams<T>& p : up_) out.insert(out.end(), {&p.weight, &p.bias});
  for (ConvParams<T>& p : tail_) out.insert(out.end(), {&p.weight, &p.bias});
  return out;
}

template <typename T>
std::size_t Generator<T>::parameter_count() {
  std::size_t n = 0;
  for (Parameter<T>* p : parameters()) n += p->value.size();
  return n;
}

template <typename T>
void Generator<T>::calibrate_alpha(const Tensor<T>& lr, const Tensor<T>& seg) {
  Graph<T> g;
  ForwardContext<T> ctx(g, false);
  auto [features, traces] = trunk(ctx, ctx.constant(lr));
  spsa_.calibrate_alpha(features.value(), seg);
  alpha_calibrated_ = true;
}

// ---------------------------------------------------------------- Discriminator

void DiscriminatorConfig::validate() const {
  if (stages == 0 || base_channels == 0 || hidden == 0) throw ConfigError("discriminator: sizes must be positive");
  if (input_size % (std::size_t{1} << stages) != 0) {
    throw ConfigError("discriminator: input size " + std::to_string(input_size) + " not divisible by 2^" +
                      std::to_string(stages));
  }
  if (!(slope > 0.0 && slope < 1.0)) throw ConfigError("discriminator: leaky slope must lie in (0, 1)");
}

template <typename T>
Discriminator<T>::Discriminator(DiscriminatorConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  std::size_t in = 3;
  for (std::size_t s = 0; s < cfg_.stages; ++s) {
    const std::size_t width = cfg_.base_channels << s;
    convs_.push_back(make_conv<T>("d.conv" + std::to_string(2 * s), width, in, 3, rng));
    convs_.push_back(make_conv<T>("d.conv" + std::to_string(2 * s + 1), width, width, 4, rng));
    in = width;
  }
  const std::size_t side = cfg_.input_size >> cfg_.stages;
  dense_.push_back(make_dense<T>("d.fc0", cfg_.hidden, in * side * side, rng));
  dense_.push_back(make_dense<T>("d.fc1", 1, cfg_.hidden, rng));
}

template <typename T>
Var<T> Discriminator<T>::forward(ForwardContext<T>& ctx, const Var<T>& img) {
  const Shape& s = img.shape();
  if (s.rank() != 4 || s[1] != 3 || s[2] != cfg_.input_size || s[3] != cfg_.input_size) {
    throw ShapeError("discriminator: expected (B, 3, " + std::to_string(cfg_.input_size) + ", " +
                     std::to_string(cfg_.input_size) + "), got " + s.str());
  }
  const T slope = static_cast<T>(cfg_.slope);
  Var<T> x = img;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const Conv2dOptions opts = i % 2 == 0 ? Conv2dOptions{1, 1} : Conv2dOptions{2, 1};
    x = leaky_relu(bias_add(conv2d(x, ctx.bind(convs_[i].weight), opts), ctx.bind(convs_[i].bias)), slope);
  }
  const Shape& xs = x.shape();
  x = reshape(x, Shape{xs[0], xs[1] * xs[2] * xs[3]});
  x = leaky_relu(bias_add(matmul(x, ctx.bind(dense_[0].weight), false, true), ctx.bind(dense_[0].bias)), slope);
  return bias_add(matmul(x, ctx.bind(dense_[1].weight), false, true), ctx.bind(dense_[1].bias));
}

template <typename T>
std::vector<Parameter<T>*> Discriminator<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (ConvParams<T>& p : convs_) out.insert(out.end(), {&p.weight, &p.bias});
  for (ConvParams<T>& p : dense_) out.insert(out.end(), {&p.weight, &p.bias});
  return out;
}

// ---------------------------------------------------------------- losses

template <typename T>
Var<T> l1_loss(const Var<T>& sr, const Var<T>& hr) {
  return mean_abs_diff(sr, hr);
}

std::string_view to_string(GanLossKind k) noexcept {
  return k == GanLossKind::standard ? "standard" : "relativistic";
}

GanLossKind parse_gan_loss(std::string_view s) {
  if (s == "standard") return GanLossKind::standard;
  if (s == "relativistic") return GanLossKind::relativistic;
  throw ConfigError("unknown GAN loss '" + std::string(s) + "' (expected standard or relativistic)");
}

template <typename T>
GanLosses<T> gan_losses(const Var<T>& d_real, const Var<T>& d_fake, GanLossKind kind) {
  if (kind == GanLossKind::standard) {
    return {mean(softplus(scale(d_fake, T{-1}))),
            add(mean(softplus(scale(d_real, T{-1}))), mean(softplus(d_fake)))};
  }
  Var<T> real_rel = shift_by(d_real, scale(mean(d_fake), T{-1}));
  Var<T> fake_rel = shift_by(d_fake, scale(mean(d_real), T{-1}));
  return {add(mean(softplus(real_rel)), mean(softplus(scale(fake_rel, T{-1})))),
          add(mean(softplus(scale(real_rel, T{-1}))), mean(softplus(fake_rel)))};
}

template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template Var<float> l1_loss(const Var<float>&, const Var<float>&);
template Var<double> l1_loss(const Var<double>&, const Var<double>&);
template GanLosses<float> gan_losses(const Var<float>&, const Var<float>&, GanLossKind);
template GanLosses<double> gan_losses(const Var<double>&, const Var<double>&, GanLossKind);

}  // namespace segsr
