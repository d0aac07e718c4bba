#pragma once

#include <filesystem>
#include <vector>

#include "segsr/spsa.hpp"

namespace segsr {

// Per-pixel distribution over the 8 segmentation channels, (8, H, W).
class SegProbMap {
 public:
  // Largest tolerated deviation of a pixel's channel sum from 1.
  static constexpr double kSumTolerance = 1e-3;

  // Validates shape, range and per-pixel normalisation.
  explicit SegProbMap(Tensor<float> probs);

  static SegProbMap one_hot(SegCategory c, std::size_t height, std::size_t width);
  static SegProbMap uniform(std::size_t height, std::size_t width);

  std::size_t height() const { return probs_.dim(1); }
  std::size_t width() const { return probs_.dim(2); }
  const Tensor<float>& probs() const noexcept { return probs_; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return probs_[(c * height() + y) * width() + x]; }

  SegProbMap crop(std::size_t y, std::size_t x, std::size_t h, std::size_t w) const;
  // (1, 8, H, W) view for the network.
  Tensor<float> batched() const { return probs_.reshaped(Shape{1, kSegChannels, height(), width()}); }

  friend bool operator==(const SegProbMap& a, const SegProbMap& b) {
    return a.probs_.shape() == b.probs_.shape() && std::equal(a.probs_.data().begin(), a.probs_.data().end(),
                                                              b.probs_.data().begin());
  }

 private:
  Tensor<float> probs_;
};

// "SPM1", u32 H, u32 W, u32 C = 8, then H*W*C little-endian f32 in
// (channel, row, col) order.
SegProbMap read_segmap(const std::filesystem::path& path);
void write_segmap(const std::filesystem::path& path, const SegProbMap& map);

struct RegionSpec {
  enum class Kind : std::uint8_t { rect, half_plane };
  SegCategory category = SegCategory::background;
  Kind kind = Kind::rect;
  // rect: [x0, x1) x [y0, y1) in pixel units.
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  // half plane: a*x + b*y + c >= 0.
  double a = 0, b = 0, c = 0;

  static RegionSpec rect(SegCategory cat, double x0, double y0, double x1, double y1);
  static RegionSpec half_plane(SegCategory cat, double a, double b, double c);
};

struct SegSynthSpec {
  std::size_t height = 0;
  std::size_t width = 0;
  // Painted in order over a background-filled map; later regions win.
  std::vector<RegionSpec> regions;
  // Width in pixels of the linear ramp across region edges; 0 = hard.
  double soft_edge = 0.0;
};

SegProbMap synth_segmap(const SegSynthSpec& spec);

}  // namespace segsr
