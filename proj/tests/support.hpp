#pragma once

// Shared fixtures and independent reference implementations for the tests.

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <filesystem>
#include <string>
#include <vector>

#include "segsr/rng.hpp"
#include "segsr/tensor.hpp"

namespace segsr::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(shape);
  for (T& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

// Direct seven-loop cross-correlation.
inline Tensor<double> conv_reference(const Tensor<double>& x, const Tensor<double>& k, std::size_t stride,
                                     std::size_t pad) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t oh = (H + 2 * pad - kh) / stride + 1, ow = (W + 2 * pad - kw) / stride + 1;
  Tensor<double> y(Shape{B, O, oh, ow});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t c = 0; c < ow; ++c) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < C; ++ci)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long iy = static_cast<long>(r * stride + u) - static_cast<long>(pad);
                const long ix = static_cast<long>(c * stride + v) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                acc += x.at(b, ci, iy, ix) * k.at(o, ci, u, v);
              }
          y.at(b, o, r, c) = acc;
        }
  return y;
}

// Per-window SSIM by explicit summation over each 11x11 neighbourhood.
inline double ssim_reference(const Tensor<double>& a, const Tensor<double>& b) {
  const std::size_t H = a.dim(0), W = a.dim(1), K = 11;
  std::vector<double> w(K * K);
  double total = 0.0;
  for (std::size_t u = 0; u < K; ++u)
    for (std::size_t v = 0; v < K; ++v) {
      const double dy = static_cast<double>(u) - 5.0, dx = static_cast<double>(v) - 5.0;
      w[u * K + v] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
      total += w[u * K + v];
    }
  for (double& x : w) x /= total;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t y = 0; y + K <= H; ++y)
    for (std::size_t x = 0; x + K <= W; ++x) {
      double ma = 0, mb = 0;
      for (std::size_t u = 0; u < K; ++u)
        for (std::size_t v = 0; v < K; ++v) {
          ma += w[u * K + v] * a[(y + u) * W + x + v];
          mb += w[u * K + v] * b[(y + u) * W + x + v];
        }
      double va = 0, vb = 0, cov = 0;
      for (std::size_t u = 0; u < K; ++u)
        for (std::size_t v = 0; v < K; ++v) {
          const double da = a[(y + u) * W + x + v] - ma, db = b[(y + u) * W + x + v] - mb;
          va += w[u * K + v] * da * da;
          vb += w[u * K + v] * db * db;
          cov += w[u * K + v] * da * db;
        }
      sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return sum / static_cast<double>(count);
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("segsr_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::FILE* f = std::fopen(p.string().c_str(), "rb");
  if (!f) return {};
  std::string s;
  char buf[65536];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) s.append(buf, n);
  std::fclose(f);
  return s;
}

}  // namespace segsr::testing
