#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "segsr/image.hpp"
#include "segsr/rng.hpp"
#include "segsr/segmap.hpp"

namespace segsr {

enum class SourceTag : std::uint8_t { primary_set, aux_set };
std::string_view to_string(SourceTag t) noexcept;
SourceTag parse_source_tag(std::string_view s);

struct ManifestEntry {
  std::filesystem::path hr;
  std::filesystem::path seg;
  SourceTag tag = SourceTag::primary_set;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::size_t ratio_primary = 10;
  std::size_t ratio_aux = 1;
  std::size_t crop_size = 96;
  std::size_t scale = 4;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t count(SourceTag tag) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

// Line-oriented text: key=value settings, then one
// "entry=<tag>\t<hr path>\t<seg path>" line per sample.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
// Relative entry paths are resolved against the manifest's directory.
DatasetManifest read_manifest(const std::filesystem::path& path);

struct PreparedSample {
  Tensor<float> lr;   // (1, 3, crop/4, crop/4)
  Tensor<float> hr;   // (1, 3, crop, crop)
  Tensor<float> seg;  // (1, 8, crop, crop)
  std::size_t offset_y = 0;
  std::size_t offset_x = 0;
};

// Aligned random crop (offsets are multiples of 4, uniform over the valid
// positions) and its bicubic /4 LR counterpart.
PreparedSample prepare_sample(const Tensor<float>& hr, const SegProbMap& seg, std::size_t crop, Rng& rng);
PreparedSample prepare_sample(const Tensor<float>& hr, const SegProbMap& seg, std::size_t crop, std::uint64_t seed);

struct Batch {
  Tensor<float> lr;
  Tensor<float> hr;
  Tensor<float> seg;
  std::vector<SourceTag> tags;
  std::vector<std::size_t> indices;  // into the dataset's entry list
};

// In-memory copy of every image and map named by a manifest.
class Dataset {
 public:
  explicit Dataset(DatasetManifest manifest);

  const DatasetManifest& manifest() const noexcept { return manifest_; }
  std::size_t size() const noexcept { return hr_.size(); }
  const Tensor<float>& hr(std::size_t i) const { return hr_.at(i); }
  const SegProbMap& seg(std::size_t i) const { return seg_.at(i); }
  const std::vector<std::size_t>& indices(SourceTag tag) const;

 private:
  DatasetManifest manifest_;
  std::vector<Tensor<float>> hr_;
  std::vector<SegProbMap> seg_;
  std::vector<std::size_t> by_tag_[2];
};

// Draws each sample's source with probability ratio_primary : ratio_aux,
// then an image uniformly within that source, then a crop.
SourceTag draw_source(const DatasetManifest& m, Rng& rng);
Batch sample_batch(const Dataset& data, std::size_t batch_size, Rng& rng);

}  // namespace segsr
