#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "segsr/tensor.hpp"

namespace segsr {

// 8-bit interleaved RGB raster.
struct ImageBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  ImageBuffer() = default;
  ImageBuffer(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 0) {}

  // (1, 3, H, W) in [0, 1].
  Tensor<float> to_tensor() const;
  // Clamps to [0, 1] and rounds to the nearest 8-bit level. Accepts
  // (B, 3, H, W), taking batch item `index`.
  static ImageBuffer from_tensor(const Tensor<float>& t, std::size_t index = 0);

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

ImageBuffer read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageBuffer& img);
void write_png(const std::filesystem::path& path, const GrayImage& img);

}  // namespace segsr
