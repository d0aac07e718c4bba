#include "segsr/segmap.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

namespace segsr {

namespace {

constexpr std::array<char, 4> kMagic{'S', 'P', 'M', '1'};

void check_map(const Tensor<float>& p) {
  if (p.rank() != 3 || p.dim(0) != kSegChannels) {
    throw ShapeError("segmentation map must be (8, H, W), got " + p.shape().str());
  }
  const std::size_t h = p.dim(1), w = p.dim(2);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double total = 0.0;
      for (std::size_t c = 0; c < kSegChannels; ++c) {
        const float v = p[(c * h + y) * w + x];
        if (!(v >= 0.0f && v <= 1.0f)) {
          throw NumericalError("segmentation map: probability " + std::to_string(v) + " outside [0, 1] at (row " +
                               std::to_string(y) + ", col " + std::to_string(x) + ")");
        }
        total += v;
      }
      if (std::abs(total - 1.0) > SegProbMap::kSumTolerance) {
        throw NumericalError("segmentation map: pixel (row " + std::to_string(y) + ", col " + std::to_string(x) +
                             ") sums to " + std::to_string(total));
      }
    }
}

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("segmentation map: truncated header");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

}  // namespace

SegProbMap::SegProbMap(Tensor<float> probs) : probs_(std::move(probs)) { check_map(probs_); }

SegProbMap SegProbMap::one_hot(SegCategory c, std::size_t height, std::size_t width) {
  Tensor<float> p(Shape{kSegChannels, height, width});
  const std::size_t ch = static_cast<std::size_t>(c);
  std::fill(p.ptr() + ch * height * width, p.ptr() + (ch + 1) * height * width, 1.0f);
  return SegProbMap(std::move(p));
}

SegProbMap SegProbMap::uniform(std::size_t height, std::size_t width) {
  return SegProbMap(Tensor<float>(Shape{kSegChannels, height, width}, 1.0f / kSegChannels));
}

SegProbMap SegProbMap::crop(std::size_t y, std::size_t x, std::size_t h, std::size_t w) const {
  if (y + h > height() || x + w > width()) throw ShapeError("SegProbMap::crop: window exceeds the map");
  Tensor<float> p(Shape{kSegChannels, h, w});
  for (std::size_t c = 0; c < kSegChannels; ++c)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t k = 0; k < w; ++k) p[(c * h + r) * w + k] = at(c, y + r, x + k);
  return SegProbMap(std::move(p));
}

SegProbMap read_segmap(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open segmentation map " + path.string());
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || magic != kMagic) throw IoError(path.string() + ": bad segmentation map magic");
  const std::uint32_t h = get_u32(is), w = get_u32(is), c = get_u32(is);
  if (c != kSegChannels) throw IoError(path.string() + ": expected 8 channels, found " + std::to_string(c));
  if (h == 0 || w == 0) throw IoError(path.string() + ": empty segmentation map");
  Tensor<float> p(Shape{kSegChannels, h, w});
  for (float& v : p.data()) {
    std::uint32_t bits = get_u32(is);
    v = std::bit_cast<float>(bits);
  }
  try {
    return SegProbMap(std::move(p));
  } catch (const Error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_segmap(const std::filesystem::path& path, const SegProbMap& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot create segmentation map " + path.string());
  os.write(kMagic.data(), 4);
  put_u32(os, static_cast<std::uint32_t>(map.height()));
  put_u32(os, static_cast<std::uint32_t>(map.width()));
  put_u32(os, static_cast<std::uint32_t>(kSegChannels));
  for (float v : map.probs().data()) put_u32(os, std::bit_cast<std::uint32_t>(v));
  if (!os) throw IoError("failed writing segmentation map " + path.string());
}

RegionSpec RegionSpec::rect(SegCategory cat, double x0, double y0, double x1, double y1) {
  RegionSpec r;
  r.category = cat;
  r.kind = Kind::rect;
  r.x0 = x0;
  r.y0 = y0;
  r.x1 = x1;
  r.y1 = y1;
  return r;
}

RegionSpec RegionSpec::half_plane(SegCategory cat, double a, double b, double c) {
  RegionSpec r;
  r.category = cat;
  r.kind = Kind::half_plane;
  r.a = a;
  r.b = b;
  r.c = c;
  return r;
}

namespace {

// Signed distance of a pixel centre to the region boundary, positive inside.
double signed_distance(const RegionSpec& r, double px, double py) {
  if (r.kind == RegionSpec::Kind::half_plane) {
    const double norm = std::hypot(r.a, r.b);
    if (norm == 0.0) throw ConfigError("synth_segmap: degenerate half plane");
    return (r.a * px + r.b * py + r.c) / norm;
  }
  return std::min({px - r.x0, r.x1 - px, py - r.y0, r.y1 - py});
}

}  // namespace

SegProbMap synth_segmap(const SegSynthSpec& spec) {
  if (spec.height == 0 || spec.width == 0) throw ConfigError("synth_segmap: empty raster");
  if (spec.soft_edge < 0.0) throw ConfigError("synth_segmap: soft edge must be non-negative");
  const std::size_t h = spec.height, w = spec.width;
  std::vector<std::array<double, kSegChannels>> px(h * w);
  for (auto& p : px) {
    p.fill(0.0);
    p[static_cast<std::size_t>(SegCategory::background)] = 1.0;
  }
  for (const RegionSpec& r : spec.regions) {
    const std::size_t cat = static_cast<std::size_t>(r.category);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double d = signed_distance(r, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5);
        const double m = spec.soft_edge == 0.0 ? (d >= 0.0 ? 1.0 : 0.0) : std::clamp(0.5 + d / spec.soft_edge, 0.0, 1.0);
        if (m == 0.0) continue;
        auto& p = px[y * w + x];
        for (double& v : p) v *= 1.0 - m;
        p[cat] += m;
      }
  }
  Tensor<float> out(Shape{kSegChannels, h, w});
  for (std::size_t i = 0; i < h * w; ++i)
    for (std::size_t c = 0; c < kSegChannels; ++c) out[c * h * w + i] = static_cast<float>(px[i][c]);
  return SegProbMap(std::move(out));
}

}  // namespace segsr
