#include "segsr/spsa.hpp"

#include <cmath>
#include <string>

namespace segsr {

std::string_view to_string(SegCategory c) noexcept {
  switch (c) {
    case SegCategory::sky: return "sky";
    case SegCategory::mountain: return "mountain";
    case SegCategory::plant: return "plant";
    case SegCategory::grass: return "grass";
    case SegCategory::water: return "water";
    case SegCategory::animal: return "animal";
    case SegCategory::building: return "building";
    case SegCategory::background: return "background";
  }
  return "unknown";
}

const Tensor<double>& AttentionState::matrix(AttentionKind kind) const {
  switch (kind) {
    case AttentionKind::feature: return beta_fea;
    case AttentionKind::segmentation: return beta_seg;
    case AttentionKind::combined: return beta_combined;
  }
  return beta_combined;
}

Tensor<double> fusion_weights(const Tensor<double>& beta_seg, const Tensor<double>& beta_fea) {
  require_same_shape(beta_seg.shape(), beta_fea.shape(), "fusion_weights");
  Tensor<double> w(beta_seg.shape());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double s = beta_seg[i] + beta_fea[i];
    w[i] = s == 0.0 ? 0.0 : std::abs(beta_seg[i] - beta_fea[i]) / s;
  }
  return w;
}

template <typename T>
T init_alpha(const Tensor<T>& x, const Tensor<T>& conv_out) {
  auto mean_abs = [](const Tensor<T>& t) {
    double acc = 0.0;
    for (T v : t.data()) acc += std::abs(static_cast<double>(v));
    return acc / static_cast<double>(t.size());
  };
  const double mx = mean_abs(x);
  const double mc = mean_abs(conv_out);
  if (mc == 0.0) throw NumericalError("init_alpha: segmentation transform output is all zero");
  if (mx == 0.0) throw NumericalError("init_alpha: feature map is all zero");
  return static_cast<T>(mx / mc);
}

template <typename T>
std::vector<Parameter<T>*> SpsaParams<T>::all() {
  return {&f_fea, &g_fea, &h, &seg_kernel, &alpha, &f_seg, &g_seg, &gamma};
}

namespace {

template <typename T>
Parameter<T> make(std::string name, Shape shape) {
  return Parameter<T>{std::move(name), Tensor<T>(shape), ParamGroup::attention};
}

// Identity plus a small perturbation: starts the segmentation branch as a
// plain inner product of transformed priors.
template <typename T>
void init_near_identity(Tensor<T>& w, Rng& rng, double noise) {
  const std::size_t c = w.dim(0);
  for (std::size_t o = 0; o < c; ++o)
    for (std::size_t i = 0; i < c; ++i) w[o * c + i] = static_cast<T>((o == i ? 1.0 : 0.0) + rng.uniform(-noise, noise));
}

}  // namespace

template <typename T>
SpsaLayer<T>::SpsaLayer(std::size_t channels, SpsaOptions opts, Rng& rng) : channels_(channels), opts_(opts) {
  if (channels == 0) throw ConfigError("SpsaLayer: channel count must be positive");
  const Shape proj{channels, channels, 1, 1};
  params_.f_fea = make<T>("spsa.f_fea", proj);
  params_.g_fea = make<T>("spsa.g_fea", proj);
  params_.h = make<T>("spsa.h", proj);
  params_.seg_kernel = make<T>("spsa.seg_kernel", Shape{channels, kSegChannels, kSegStride, kSegStride});
  params_.alpha = make<T>("spsa.alpha", Shape{1});
  params_.f_seg = make<T>("spsa.f_seg", proj);
  params_.g_seg = make<T>("spsa.g_seg", proj);
  params_.gamma = make<T>("spsa.gamma", Shape{1});
  init_uniform(params_.f_fea.value, rng);
  init_uniform(params_.g_fea.value, rng);
  init_uniform(params_.h.value, rng);
  init_uniform(params_.seg_kernel.value, rng);
  init_near_identity(params_.f_seg.value, rng, 0.01);
  init_near_identity(params_.g_seg.value, rng, 0.01);
  params_.alpha.value[0] = T{1};
  params_.gamma.value[0] = T{0};
}

template <typename T>
void SpsaLayer<T>::check_positions(const Shape& x) const {
  if (x.rank() != 4 || x[1] != channels_) {
    throw ShapeError("SpsaLayer: expected (B, " + std::to_string(channels_) + ", h, w), got " + x.str());
  }
  const std::size_t n = x[2] * x[3];
  if (n > opts_.max_positions) {
    throw ConfigError("SpsaLayer: " + std::to_string(n) + " attention positions exceed the cap of " +
                      std::to_string(opts_.max_positions));
  }
}

template <typename T>
Var<T> SpsaLayer<T>::attention(ForwardContext<T>& ctx, const Var<T>& features, Parameter<T>& wf, Parameter<T>& wg) {
  const Shape& s = features.shape();
  check_positions(s);
  if (!features.value().all_finite()) throw NumericalError("SpsaLayer: non-finite features");
  const Shape flat{s[0], s[1], s[2] * s[3]};
  Var<T> f = reshape(conv2d(features, ctx.bind(wf)), flat);
  Var<T> g = reshape(conv2d(features, ctx.bind(wg)), flat);
  // logits[b][j][i] = g(x_j) . f(x_i)
  return softmax_rows(matmul(g, f, true, false));
}

template <typename T>
Var<T> SpsaLayer<T>::feature_attention(ForwardContext<T>& ctx, const Var<T>& x) {
  return attention(ctx, x, params_.f_fea, params_.g_fea);
}

template <typename T>
Var<T> SpsaLayer<T>::seg_transform(ForwardContext<T>& ctx, const Var<T>& seg) {
  const Shape& s = seg.shape();
  if (s.rank() != 4 || s[1] != kSegChannels) {
    throw ShapeError("seg_transform: expected (B, 8, H, W) probabilities, got " + s.str());
  }
  if (s[2] % kSegStride != 0 || s[3] % kSegStride != 0) {
    throw ShapeError("seg_transform: map extents " + s.str() + " are not divisible by 4");
  }
  Var<T> conv = conv2d(seg, ctx.bind(params_.seg_kernel), Conv2dOptions{kSegStride, 0});
  return scale_by(conv, ctx.bind(params_.alpha));
}

template <typename T>
Var<T> SpsaLayer<T>::seg_attention(ForwardContext<T>& ctx, const Var<T>& z) {
  return attention(ctx, z, params_.f_seg, params_.g_seg);
}

template <typename T>
typename SpsaLayer<T>::Output SpsaLayer<T>::forward(ForwardContext<T>& ctx, const Var<T>& x, const Var<T>& seg,
                                                    const std::optional<Tensor<T>>& forced_attention) {
  const Shape& xs = x.shape();
  check_positions(xs);
  Var<T> z = seg_transform(ctx, seg);
  if (!(z.shape() == xs)) {
    throw ShapeError("SpsaLayer: segmentation features " + z.shape().str() + " do not match feature map " + xs.str());
  }
  Var<T> beta_fea = feature_attention(ctx, x);
  Var<T> beta_seg = seg_attention(ctx, z);
  Var<T> beta = normalize_rows(fuse_attention(beta_seg, beta_fea));
  if (forced_attention) {
    require_same_shape(forced_attention->shape(), beta.shape(), "SpsaLayer forced attention");
    beta = ctx.constant(*forced_attention);
  }
  const Shape flat{xs[0], xs[1], xs[2] * xs[3]};
  Var<T> h = reshape(conv2d(x, ctx.bind(params_.h)), flat);
  // o[c][j] = sum_i beta[j][i] h[c][i]
  Var<T> o = reshape(matmul(h, beta, false, true), xs);
  Var<T> y = opts_.residual ? add(x, scale_by(o, ctx.bind(params_.gamma))) : o;
  return Output{y, beta_fea, beta_seg, beta};
}

template <typename T>
T SpsaLayer<T>::calibrate_alpha(const Tensor<T>& x, const Tensor<T>& seg) {
  Graph<T> g;
  ForwardContext<T> ctx(g, false);
  Var<T> conv = conv2d(ctx.constant(seg), ctx.bind(params_.seg_kernel), Conv2dOptions{kSegStride, 0});
  params_.alpha.value[0] = init_alpha(x, conv.value());
  return params_.alpha.value[0];
}

template <typename T>
AttentionState attention_state(const typename SpsaLayer<T>::Output& out, std::size_t b, std::size_t grid_h,
                               std::size_t grid_w) {
  const std::size_t n = grid_h * grid_w;
  auto slice = [&](const Var<T>& v) {
    const Shape& s = v.shape();
    if (s.rank() != 3 || s[1] != n || s[2] != n || b >= s[0]) {
      throw ShapeError("attention_state: attention " + s.str() + " does not match grid " + std::to_string(grid_h) +
                       "x" + std::to_string(grid_w) + " at batch index " + std::to_string(b));
    }
    Tensor<double> m(Shape{n, n});
    const T* src = v.value().ptr() + b * n * n;
    for (std::size_t i = 0; i < n * n; ++i) m[i] = static_cast<double>(src[i]);
    return m;
  };
  AttentionState st;
  st.beta_fea = slice(out.beta_fea);
  st.beta_seg = slice(out.beta_seg);
  st.beta_combined = slice(out.beta_combined);
  st.w_seg = fusion_weights(st.beta_seg, st.beta_fea);
  st.grid_h = grid_h;
  st.grid_w = grid_w;
  return st;
}

template float init_alpha(const Tensor<float>&, const Tensor<float>&);
template double init_alpha(const Tensor<double>&, const Tensor<double>&);
template struct SpsaParams<float>;
template struct SpsaParams<double>;
template class SpsaLayer<float>;
template class SpsaLayer<double>;
template AttentionState attention_state<float>(const SpsaLayer<float>::Output&, std::size_t, std::size_t, std::size_t);
template AttentionState attention_state<double>(const SpsaLayer<double>::Output&, std::size_t, std::size_t,
                                                std::size_t);

}  // namespace segsr
