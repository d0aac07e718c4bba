#include "segsr/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "segsr/rng.hpp"

namespace segsr {

namespace {

struct Look {
  std::array<double, 3> rgb;
  double freq;   // stripe frequency in cycles per pixel
  double angle;  // stripe direction
};

constexpr std::array<Look, kSegChannels> kLooks{{
    {{0.45, 0.65, 0.90}, 0.03, 0.0},   // sky
    {{0.45, 0.40, 0.35}, 0.08, 0.6},   // mountain
    {{0.20, 0.50, 0.20}, 0.20, 1.2},   // plant
    {{0.35, 0.70, 0.25}, 0.12, 1.57},  // grass
    {{0.15, 0.35, 0.60}, 0.06, 0.2},   // water
    {{0.60, 0.45, 0.30}, 0.16, 2.2},   // animal
    {{0.65, 0.55, 0.55}, 0.25, 0.0},   // building
    {{0.50, 0.50, 0.50}, 0.10, 0.8},   // background
}};

}  // namespace

ImageBuffer paint_regions(const SegProbMap& seg, std::uint64_t seed) {
  Rng rng(seed);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double shade = rng.uniform(-0.08, 0.08);
  ImageBuffer img(seg.width(), seg.height());
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      std::array<double, 3> px{0.0, 0.0, 0.0};
      for (std::size_t c = 0; c < kSegChannels; ++c) {
        const double p = seg.at(c, y, x);
        if (p == 0.0) continue;
        const Look& l = kLooks[c];
        const double t = std::cos(l.angle) * static_cast<double>(x) + std::sin(l.angle) * static_cast<double>(y);
        const double stripe = 0.12 * std::sin(2.0 * std::numbers::pi * l.freq * t + phase);
        for (int k = 0; k < 3; ++k) px[k] += p * (l.rgb[k] + shade + stripe);
      }
      for (int k = 0; k < 3; ++k) {
        const double v = std::clamp(px[k] + rng.uniform(-0.01, 0.01), 0.0, 1.0);
        img.rgb[(y * img.width + x) * 3 + k] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  return img;
}

SyntheticPair synth_pair(std::size_t height, std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  const auto first = static_cast<SegCategory>(rng.index(kSegChannels));
  auto second = static_cast<SegCategory>(rng.index(kSegChannels - 1));
  if (second >= first) second = static_cast<SegCategory>(static_cast<int>(second) + 1);
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double cx = rng.uniform(0.3, 0.7) * static_cast<double>(width);
  const double cy = rng.uniform(0.3, 0.7) * static_cast<double>(height);
  const double a = std::cos(theta), b = std::sin(theta);
  SegSynthSpec spec;
  spec.height = height;
  spec.width = width;
  spec.regions = {RegionSpec::half_plane(first, 1.0, 0.0, 1e9),  // whole raster
                  RegionSpec::half_plane(second, a, b, -(a * cx + b * cy))};
  SegProbMap seg = synth_segmap(spec);
  ImageBuffer img = paint_regions(seg, rng.fork());
  return {std::move(img), std::move(seg)};
}

SegSynthSpec two_region_spec(std::size_t height, std::size_t width) {
  SegSynthSpec spec;
  spec.height = height;
  spec.width = width;
  const double half = static_cast<double>(width / 2);
  spec.regions = {RegionSpec::half_plane(SegCategory::sky, -1.0, 0.0, half),
                  RegionSpec::half_plane(SegCategory::grass, 1.0, 0.0, -half)};
  return spec;
}

SyntheticPair two_region_pair(std::size_t height, std::size_t width, std::uint64_t seed) {
  SegProbMap seg = synth_segmap(two_region_spec(height, width));
  ImageBuffer img = paint_regions(seg, seed);
  return {std::move(img), std::move(seg)};
}

}  // namespace segsr
