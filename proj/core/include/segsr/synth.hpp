#pragma once

#include <cstdint>

#include "segsr/image.hpp"
#include "segsr/segmap.hpp"

namespace segsr {

struct SyntheticPair {
  ImageBuffer image;
  SegProbMap seg;
};

// Category-dependent colour and stripe texture for a two-region layout.
ImageBuffer paint_regions(const SegProbMap& seg, std::uint64_t seed);

// Two categories split by a random line through the image.
SyntheticPair synth_pair(std::size_t height, std::size_t width, std::uint64_t seed);

// The fixed left/right layout used to probe attention: sky on the left
// half, grass on the right.
SegSynthSpec two_region_spec(std::size_t height, std::size_t width);
SyntheticPair two_region_pair(std::size_t height, std::size_t width, std::uint64_t seed);

}  // namespace segsr
