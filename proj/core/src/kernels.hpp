#pragma once

// Dense inner loops shared by the ops. Not part of the installed interface.

#include <cstddef>
#include <vector>

namespace segsr::detail {

// C[M x N] += A[M x K] * B[K x N], all row-major and contiguous.
template <typename T>
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const T a0 = arow[p], a1 = arow[p + 1], a2 = arow[p + 2], a3 = arow[p + 3];
      const T* b0 = b + p * n;
      const T* b1 = b0 + n;
      const T* b2 = b1 + n;
      const T* b3 = b2 + n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
    }
    for (; p < k; ++p) {
      const T a0 = arow[p];
      const T* b0 = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += a0 * b0[j];
    }
  }
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  constexpr std::size_t tile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += tile) {
    for (std::size_t c0 = 0; c0 < cols; c0 += tile) {
      const std::size_t r1 = r0 + tile < rows ? r0 + tile : rows;
      const std::size_t c1 = c0 + tile < cols ? c0 + tile : cols;
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
    }
  }
}

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kh, kw, stride, padding;
  std::size_t out_h, out_w;
  std::size_t patch() const { return channels * kh * kw; }
  std::size_t pixels() const { return out_h * out_w; }
};

// col[(c, ky, kx)][(oy, ox)], zero outside the padded border.
template <typename T>
void im2col(const ConvGeometry& g, const T* in, T* col) {
  const long pad = static_cast<long>(g.padding);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = in + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* dst = col + ((c * g.kh + ky) * g.kw + kx) * g.pixels();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - pad;
          T* drow = dst + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            for (std::size_t ox = 0; ox < g.out_w; ++ox) drow[ox] = T{};
            continue;
          }
          const T* srow = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - pad;
            drow[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? T{} : srow[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into the image.
template <typename T>
void col2im_acc(const ConvGeometry& g, const T* col, T* in) {
  const long pad = static_cast<long>(g.padding);
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = in + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* src = col + ((c * g.kh + ky) * g.kw + kx) * g.pixels();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          T* drow = plane + static_cast<std::size_t>(iy) * g.width;
          const T* srow = src + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - pad;
            if (ix >= 0 && ix < static_cast<long>(g.width)) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

}  // namespace segsr::detail
