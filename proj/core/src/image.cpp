#include "segsr/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace segsr {

Tensor<float> ImageBuffer::to_tensor() const {
  Tensor<float> t(Shape{1, 3, height, width});
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < 3; ++c) t.at(0, c, y, x) = static_cast<float>(rgb[(y * width + x) * 3 + c]) / 255.0f;
  return t;
}

ImageBuffer ImageBuffer::from_tensor(const Tensor<float>& t, std::size_t index) {
  if (t.rank() != 4 || t.dim(1) != 3 || index >= t.dim(0)) {
    throw ShapeError("ImageBuffer::from_tensor: expected (B, 3, H, W), got " + t.shape().str());
  }
  ImageBuffer img(t.dim(3), t.dim(2));
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = std::clamp(t.at(index, c, y, x), 0.0f, 1.0f);
        img.rgb[(y * img.width + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  return img;
}

namespace {

void write_raw(const std::filesystem::path& path, std::size_t w, std::size_t h, png_uint_32 format,
               const std::uint8_t* data) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, data, 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

}  // namespace

ImageBuffer read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  ImageBuffer img(image.width, image.height);
  if (!png_image_finish_read(&image, nullptr, img.rgb.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return img;
}

void write_png(const std::filesystem::path& path, const ImageBuffer& img) {
  if (img.rgb.size() != img.width * img.height * 3) throw ShapeError("write_png: RGB buffer size mismatch");
  write_raw(path, img.width, img.height, PNG_FORMAT_RGB, img.rgb.data());
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
  if (img.pixels.size() != img.width * img.height) throw ShapeError("write_png: gray buffer size mismatch");
  write_raw(path, img.width, img.height, PNG_FORMAT_GRAY, img.pixels.data());
}

}  // namespace segsr
