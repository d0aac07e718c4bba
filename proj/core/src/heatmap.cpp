#include "segsr/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace segsr {

std::vector<double> attention_row(const AttentionState& s, AttentionKind which, std::size_t query) {
  const std::size_t n = s.positions();
  if (query >= n) {
    throw ConfigError("attention query " + std::to_string(query) + " out of range for " + std::to_string(n) +
                      " positions");
  }
  const Tensor<double>& m = s.matrix(which);
  std::vector<double> row(m.ptr() + query * n, m.ptr() + (query + 1) * n);
  const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
  const double a = *lo, b = *hi;
  for (double& v : row) v = b > a ? (v - a) / (b - a) : 0.5;
  return row;
}

GrayImage render_attention_map(const AttentionState& s, AttentionKind which, std::size_t query, std::size_t hr_h,
                               std::size_t hr_w, bool mark_query) {
  if (hr_h != s.grid_h * kSegStride || hr_w != s.grid_w * kSegStride) {
    throw ShapeError("attention map: HR size " + std::to_string(hr_h) + "x" + std::to_string(hr_w) +
                     " is not 4x the attention grid");
  }
  const auto row = attention_row(s, which, query);
  GrayImage img{hr_w, hr_h, std::vector<std::uint8_t>(hr_h * hr_w)};
  for (std::size_t y = 0; y < hr_h; ++y)
    for (std::size_t x = 0; x < hr_w; ++x) {
      const double v = row[(y / kSegStride) * s.grid_w + x / kSegStride];
      img.pixels[y * hr_w + x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  if (mark_query) {
    const std::size_t cy = (query / s.grid_w) * kSegStride + 1, cx = (query % s.grid_w) * kSegStride + 1;
    for (std::size_t y = cy; y < cy + 3; ++y)
      for (std::size_t x = cx; x < cx + 3; ++x) img.pixels[y * hr_w + x] = 255;
  }
  return img;
}

AttentionKind parse_attention_kind(std::string_view s) {
  if (s == "fea") return AttentionKind::feature;
  if (s == "seg") return AttentionKind::segmentation;
  if (s == "combined") return AttentionKind::combined;
  throw ConfigError("unknown attention kind '" + std::string(s) + "' (expected fea, seg or combined)");
}

}  // namespace segsr
