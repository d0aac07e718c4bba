#pragma once

#include <limits>

#include "segsr/tensor.hpp"

namespace segsr {

// PSNR of identical images.
inline constexpr double kPsnrInfinite = std::numeric_limits<double>::infinity();

// BT.601 limited-range luma of an RGB image in [0, 1]. Accepts (3, H, W) or
// (1, 3, H, W); returns (H, W).
template <typename T>
Tensor<double> rgb_to_y(const Tensor<T>& rgb);

// 10 log10(1 / MSE) with peak 1. Returns kPsnrInfinite when MSE is 0.
double psnr(const Tensor<double>& a, const Tensor<double>& b);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

// Mean SSIM over every fully contained Gaussian window of two (H, W)
// planes. Planes smaller than the window are rejected.
double ssim(const Tensor<double>& a, const Tensor<double>& b, const SsimOptions& opts = {});

// Normalised 1-D Gaussian taps used by ssim.
std::vector<double> gaussian_window(std::size_t size, double sigma);

}  // namespace segsr
