#include "segsr/dataset.hpp"

#include <charconv>
#include <fstream>
#include <string>

#include "segsr/resize.hpp"

namespace segsr {

std::string_view to_string(SourceTag t) noexcept {
  return t == SourceTag::primary_set ? "primary_set" : "aux_set";
}

SourceTag parse_source_tag(std::string_view s) {
  if (s == "primary_set") return SourceTag::primary_set;
  if (s == "aux_set") return SourceTag::aux_set;
  throw ConfigError("unknown source tag '" + std::string(s) + "'");
}

void DatasetManifest::validate() const {
  if (ratio_primary + ratio_aux == 0) throw ConfigError("manifest: mixing ratio must have a positive entry");
  if (crop_size == 0 || crop_size % 4 != 0) throw ConfigError("manifest: crop size must be a positive multiple of 4");
  if (scale != 4) throw ConfigError("manifest: scale must be 4");
  if (ratio_primary > 0 && count(SourceTag::primary_set) == 0) {
    throw ConfigError("manifest: ratio demands primary_set samples but none are listed");
  }
  if (ratio_aux > 0 && count(SourceTag::aux_set) == 0) {
    throw ConfigError("manifest: ratio demands aux_set samples but none are listed");
  }
}

std::size_t DatasetManifest::count(SourceTag tag) const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.tag == tag;
  return n;
}

namespace {

std::uint64_t parse_uint(std::string_view s, std::string_view key) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw ConfigError("manifest: bad integer for " + std::string(key) + ": '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot create manifest " + path.string());
  os << "# segsr dataset manifest\n"
     << "crop_size=" << m.crop_size << "\n"
     << "scale=" << m.scale << "\n"
     << "ratio=" << m.ratio_primary << ":" << m.ratio_aux << "\n"
     << "seed=" << m.seed << "\n";
  for (const auto& e : m.entries) {
    os << "entry=" << to_string(e.tag) << '\t' << e.hr.generic_string() << '\t' << e.seg.generic_string() << "\n";
  }
  if (!os) throw IoError("failed writing manifest " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  auto resolve = [&](std::string_view p) {
    std::filesystem::path fp{std::string(p)};
    return fp.is_absolute() ? fp : base / fp;
  };
  DatasetManifest m;
  m.entries.clear();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("manifest line " + std::to_string(lineno) + ": missing '='");
    const std::string_view key(line.data(), eq), value(line.data() + eq + 1, line.size() - eq - 1);
    if (key == "crop_size") {
      m.crop_size = parse_uint(value, key);
    } else if (key == "scale") {
      m.scale = parse_uint(value, key);
    } else if (key == "seed") {
      m.seed = parse_uint(value, key);
    } else if (key == "ratio") {
      const auto colon = value.find(':');
      if (colon == std::string_view::npos) throw ConfigError("manifest: ratio must look like P:A");
      m.ratio_primary = parse_uint(value.substr(0, colon), key);
      m.ratio_aux = parse_uint(value.substr(colon + 1), key);
    } else if (key == "entry") {
      const auto t1 = value.find('\t');
      const auto t2 = t1 == std::string_view::npos ? t1 : value.find('\t', t1 + 1);
      if (t2 == std::string_view::npos) {
        throw ConfigError("manifest line " + std::to_string(lineno) + ": entry needs tag, hr path and seg path");
      }
      m.entries.push_back({resolve(value.substr(t1 + 1, t2 - t1 - 1)), resolve(value.substr(t2 + 1)),
                           parse_source_tag(value.substr(0, t1))});
    } else {
      throw ConfigError("manifest line " + std::to_string(lineno) + ": unknown key '" + std::string(key) + "'");
    }
  }
  m.validate();
  return m;
}

PreparedSample prepare_sample(const Tensor<float>& hr, const SegProbMap& seg, std::size_t crop, Rng& rng) {
  if (hr.rank() != 4 || hr.dim(0) != 1 || hr.dim(1) != 3) {
    throw ShapeError("prepare_sample: expected a (1, 3, H, W) image, got " + hr.shape().str());
  }
  const std::size_t h = hr.dim(2), w = hr.dim(3);
  if (seg.height() != h || seg.width() != w) throw ShapeError("prepare_sample: segmentation map size differs from image");
  if (crop == 0 || crop % 4 != 0) throw ConfigError("prepare_sample: crop must be a positive multiple of 4");
  if (h < crop || w < crop) {
    throw ShapeError("prepare_sample: image " + std::to_string(h) + "x" + std::to_string(w) + " is smaller than crop " +
                     std::to_string(crop));
  }
  PreparedSample s;
  s.offset_y = 4 * rng.index((h - crop) / 4 + 1);
  s.offset_x = 4 * rng.index((w - crop) / 4 + 1);
  s.hr = Tensor<float>(Shape{1, 3, crop, crop});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < crop; ++y)
      for (std::size_t x = 0; x < crop; ++x) s.hr.at(0, c, y, x) = hr.at(0, c, s.offset_y + y, s.offset_x + x);
  s.seg = seg.crop(s.offset_y, s.offset_x, crop, crop).batched();
  s.lr = bicubic_resize(s.hr, ScaleFactor::down_by(4));
  return s;
}

PreparedSample prepare_sample(const Tensor<float>& hr, const SegProbMap& seg, std::size_t crop, std::uint64_t seed) {
  Rng rng(seed);
  return prepare_sample(hr, seg, crop, rng);
}

Dataset::Dataset(DatasetManifest manifest) : manifest_(std::move(manifest)) {
  manifest_.validate();
  for (std::size_t i = 0; i < manifest_.entries.size(); ++i) {
    const auto& e = manifest_.entries[i];
    hr_.push_back(read_png(e.hr).to_tensor());
    seg_.push_back(read_segmap(e.seg));
    if (seg_.back().height() != hr_.back().dim(2) || seg_.back().width() != hr_.back().dim(3)) {
      throw IoError(e.seg.string() + ": segmentation map size differs from " + e.hr.string());
    }
    if (hr_.back().dim(2) < manifest_.crop_size || hr_.back().dim(3) < manifest_.crop_size) {
      throw IoError(e.hr.string() + ": image smaller than the crop size");
    }
    by_tag_[static_cast<int>(e.tag)].push_back(i);
  }
}

const std::vector<std::size_t>& Dataset::indices(SourceTag tag) const { return by_tag_[static_cast<int>(tag)]; }

SourceTag draw_source(const DatasetManifest& m, Rng& rng) {
  const double total = static_cast<double>(m.ratio_primary + m.ratio_aux);
  if (total == 0) throw ConfigError("draw_source: empty mixing ratio");
  return rng.bernoulli(static_cast<double>(m.ratio_primary) / total) ? SourceTag::primary_set : SourceTag::aux_set;
}

Batch sample_batch(const Dataset& data, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ConfigError("sample_batch: batch size must be positive");
  const std::size_t crop = data.manifest().crop_size, lc = crop / 4;
  Batch b;
  b.lr = Tensor<float>(Shape{batch_size, 3, lc, lc});
  b.hr = Tensor<float>(Shape{batch_size, 3, crop, crop});
  b.seg = Tensor<float>(Shape{batch_size, kSegChannels, crop, crop});
  for (std::size_t k = 0; k < batch_size; ++k) {
    const SourceTag tag = draw_source(data.manifest(), rng);
    const auto& pool = data.indices(tag);
    if (pool.empty()) throw ConfigError("sample_batch: no samples tagged " + std::string(to_string(tag)));
    const std::size_t idx = pool[rng.index(pool.size())];
    const PreparedSample s = prepare_sample(data.hr(idx), data.seg(idx), crop, rng);
    std::copy(s.lr.data().begin(), s.lr.data().end(), b.lr.ptr() + k * s.lr.size());
    std::copy(s.hr.data().begin(), s.hr.data().end(), b.hr.ptr() + k * s.hr.size());
    std::copy(s.seg.data().begin(), s.seg.data().end(), b.seg.ptr() + k * s.seg.size());
    b.tags.push_back(tag);
    b.indices.push_back(idx);
  }
  return b;
}

}  // namespace segsr
