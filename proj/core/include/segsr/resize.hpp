#pragma once

#include <cstddef>

#include "segsr/tensor.hpp"

namespace segsr {

// Integer up- or down-scaling factor (k or 1/k).
struct ScaleFactor {
  std::size_t factor = 1;
  bool down = false;

  static ScaleFactor up_by(std::size_t k) { return {k, false}; }
  static ScaleFactor down_by(std::size_t k) { return {k, true}; }
};

// Keys cubic convolution kernel.
double cubic_kernel(double x, double a = -0.5);

// Separable bicubic resize of a rank-4 (B, C, H, W) tensor. Downscaling
// widens the kernel by the factor (antialiasing); weights are normalised per
// output sample and borders are replicated. Not differentiable.
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& img, ScaleFactor scale);

}  // namespace segsr
