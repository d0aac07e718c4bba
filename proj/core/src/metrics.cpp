#include "segsr/metrics.hpp"

#include <cmath>

namespace segsr {

template <typename T>
Tensor<double> rgb_to_y(const Tensor<T>& rgb) {
  const bool batched = rgb.rank() == 4;
  if (!(rgb.rank() == 3 && rgb.dim(0) == 3) && !(batched && rgb.dim(0) == 1 && rgb.dim(1) == 3)) {
    throw ShapeError("rgb_to_y: expected (3, H, W) or (1, 3, H, W), got " + rgb.shape().str());
  }
  const std::size_t h = rgb.dim(rgb.rank() - 2), w = rgb.dim(rgb.rank() - 1), plane = h * w;
  Tensor<double> y(Shape{h, w});
  const T* p = rgb.ptr();
  for (std::size_t i = 0; i < plane; ++i) {
    const double r = p[i], g = p[plane + i], b = p[2 * plane + i];
    y[i] = (16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0;
  }
  return y;
}

template Tensor<double> rgb_to_y(const Tensor<float>&);
template Tensor<double> rgb_to_y(const Tensor<double>&);

namespace {

void check_planes(const Tensor<double>& a, const Tensor<double>& b, const char* what) {
  if (a.rank() != 2) throw ShapeError(std::string(what) + ": expected a single-channel (H, W) plane");
  require_same_shape(a.shape(), b.shape(), what);
}

}  // namespace

double psnr(const Tensor<double>& a, const Tensor<double>& b) {
  check_planes(a, b, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    se += d * d;
  }
  if (se == 0.0) return kPsnrInfinite;
  return 10.0 * std::log10(static_cast<double>(a.size()) / se);
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> g(size);
  const double centre = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - centre;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

namespace {

// 'Valid' separable filtering of an (H, W) plane.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::vector<double>& g) {
  const std::size_t k = g.size(), oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += g[t] * src[y * w + x + t];
      rows[y * ow + x] = acc;
    }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t t = 0; t < k; ++t) {
      const double gt = g[t];
      const double* r = &rows[(y + t) * ow];
      double* o = &out[y * ow];
      for (std::size_t x = 0; x < ow; ++x) o[x] += gt * r[x];
    }
  return out;
}

}  // namespace

double ssim(const Tensor<double>& a, const Tensor<double>& b, const SsimOptions& opts) {
  check_planes(a, b, "ssim");
  const std::size_t h = a.dim(0), w = a.dim(1);
  if (opts.window == 0 || h < opts.window || w < opts.window) {
    throw ShapeError("ssim: image " + a.shape().str() + " is smaller than the " + std::to_string(opts.window) +
                     "-pixel window");
  }
  const auto g = gaussian_window(opts.window, opts.sigma);
  const std::size_t n = h * w;
  std::vector<double> va(a.data().begin(), a.data().end()), vb(b.data().begin(), b.data().end());
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = va[i] * va[i];
    bb[i] = vb[i] * vb[i];
    ab[i] = va[i] * vb[i];
  }
  const auto mu_a = filter_valid(va, h, w, g), mu_b = filter_valid(vb, h, w, g);
  const auto e_aa = filter_valid(aa, h, w, g), e_bb = filter_valid(bb, h, w, g), e_ab = filter_valid(ab, h, w, g);
  const double c1 = std::pow(opts.k1 * opts.dynamic_range, 2), c2 = std::pow(opts.k2 * opts.dynamic_range, 2);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double var_a = e_aa[i] - ma * ma, var_b = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

}  // namespace segsr
