#pragma once

#include <cstddef>
#include <span>

#include "segsr/graph.hpp"

namespace segsr {

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Output extent of a strided convolution; throws ShapeError when the result
// is not a positive integer.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

// Cross-correlation. input (B, C, H, W), kernel (O, C, kh, kw).
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, Conv2dOptions opts = {});

// Adds bias[c] along axis 1 of a rank-2 (B, C) or rank-4 (B, C, H, W) tensor.
template <typename T>
Var<T> bias_add(const Var<T>& x, const Var<T>& bias);

// max(x, slope*x); the derivative at exactly 0 is `slope`.
template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

// c * x for a compile-time-constant c.
template <typename T>
Var<T> scale(const Var<T>& x, T c);
// s * x for a one-element node s.
template <typename T>
Var<T> scale_by(const Var<T>& x, const Var<T>& s);
// x + s for a one-element node s.
template <typename T>
Var<T> shift_by(const Var<T>& x, const Var<T>& s);

// Rank-4 concatenation along the channel axis.
template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts);

template <typename T>
Var<T> upsample_nearest(const Var<T>& x, std::size_t factor);

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

// op(a) * op(b) for rank-2 matrices or rank-3 batches of matrices.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool transpose_a = false, bool transpose_b = false);

// Softmax over the last axis, max-subtracted. NaN input is rejected.
template <typename T>
Var<T> softmax_rows(const Var<T>& logits);

// Pre-normalisation weighted fusion of two attention tensors:
//   w = |seg - fea| / (seg + fea)   (w = 0 where seg + fea = 0)
//   out = w * seg + (1 - w) * fea
template <typename T>
Var<T> fuse_attention(const Var<T>& seg, const Var<T>& fea);

// Divides every last-axis row by its sum.
template <typename T>
Var<T> normalize_rows(const Var<T>& x);

template <typename T>
Var<T> sum(const Var<T>& x);
template <typename T>
Var<T> mean(const Var<T>& x);
// mean(|a - b|)
template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b);
// log(1 + exp(x)), elementwise
template <typename T>
Var<T> softplus(const Var<T>& x);

}  // namespace segsr
