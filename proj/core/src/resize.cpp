#include "segsr/resize.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace segsr {

double cubic_kernel(double x, double a) {
  const double t = std::abs(x);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

namespace {

struct Tap {
  std::size_t index;
  double weight;
};

std::vector<std::vector<Tap>> axis_taps(std::size_t in, std::size_t out, ScaleFactor s) {
  const double k = static_cast<double>(s.factor);
  const double support = s.down ? 2.0 * k : 2.0;
  std::vector<std::vector<Tap>> taps(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double center = s.down ? (static_cast<double>(o) + 0.5) * k - 0.5 : (static_cast<double>(o) + 0.5) / k - 0.5;
    const long lo = static_cast<long>(std::floor(center - support)) + 1;
    const long hi = static_cast<long>(std::ceil(center + support)) - 1;
    double total = 0.0;
    for (long i = lo; i <= hi; ++i) {
      const double dist = center - static_cast<double>(i);
      const double w = s.down ? cubic_kernel(dist / k) / k : cubic_kernel(dist);
      if (w == 0.0) continue;
      const long clamped = std::clamp<long>(i, 0, static_cast<long>(in) - 1);
      taps[o].push_back({static_cast<std::size_t>(clamped), w});
      total += w;
    }
    for (Tap& t : taps[o]) t.weight /= total;
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& img, ScaleFactor scale) {
  if (img.rank() != 4) throw ShapeError("bicubic_resize: expected (B, C, H, W), got " + img.shape().str());
  if (scale.factor == 0) throw ConfigError("bicubic_resize: scale factor must be positive");
  const std::size_t planes = img.dim(0) * img.dim(1);
  const std::size_t h = img.dim(2), w = img.dim(3);
  std::size_t oh, ow;
  if (scale.down) {
    if (h % scale.factor != 0 || w % scale.factor != 0) {
      throw ShapeError("bicubic_resize: " + std::to_string(h) + "x" + std::to_string(w) + " is not divisible by " +
                       std::to_string(scale.factor));
    }
    oh = h / scale.factor;
    ow = w / scale.factor;
  } else {
    oh = h * scale.factor;
    ow = w * scale.factor;
  }
  const auto rows = axis_taps(h, oh, scale);
  const auto cols = axis_taps(w, ow, scale);

  Tensor<T> out(Shape{img.dim(0), img.dim(1), oh, ow});
  std::vector<double> tmp(h * ow);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = img.ptr() + p * h * w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (const Tap& t : cols[x]) acc += t.weight * static_cast<double>(src[y * w + t.index]);
        tmp[y * ow + x] = acc;
      }
    T* dst = out.ptr() + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (const Tap& t : rows[y]) acc += t.weight * tmp[t.index * ow + x];
        dst[y * ow + x] = static_cast<T>(acc);
      }
  }
  return out;
}

template Tensor<float> bicubic_resize(const Tensor<float>&, ScaleFactor);
template Tensor<double> bicubic_resize(const Tensor<double>&, ScaleFactor);

}  // namespace segsr
