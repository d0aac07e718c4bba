#pragma once

// Small on-disk datasets built from the synthetic scene generator.

#include <cstdio>
#include <filesystem>

#include "segsr/dataset.hpp"
#include "segsr/image.hpp"
#include "segsr/segmap.hpp"
#include "segsr/synth.hpp"

namespace segsr::testing {

inline DatasetManifest write_synthetic_set(const std::filesystem::path& dir, std::size_t count, std::size_t size,
                                           std::size_t crop, std::uint64_t seed, std::size_t aux_count = 0) {
  DatasetManifest m;
  m.crop_size = crop;
  m.seed = seed;
  m.ratio_primary = 1;
  m.ratio_aux = aux_count > 0 ? 1 : 0;
  for (std::size_t i = 0; i < count + aux_count; ++i) {
    const SyntheticPair p = synth_pair(size, size, seed * 1000 + i);
    char stem[32];
    std::snprintf(stem, sizeof stem, "img_%04zu", i);
    const auto hr = dir / (std::string(stem) + ".png");
    const auto seg = dir / (std::string(stem) + ".spm");
    write_png(hr, p.image);
    write_segmap(seg, p.seg);
    m.entries.push_back({hr, seg, i < count ? SourceTag::primary_set : SourceTag::aux_set});
  }
  return m;
}

}  // namespace segsr::testing
