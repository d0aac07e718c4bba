#pragma once

#include <vector>

#include "segsr/image.hpp"
#include "segsr/spsa.hpp"

namespace segsr {

// Row `query` of the chosen matrix, min-max normalised over the grid.
// Constant rows map to 0.5 everywhere.
std::vector<double> attention_row(const AttentionState& s, AttentionKind which, std::size_t query);

// Grayscale heatmap at HR size (4x the attention grid, nearest). The query
// cell is marked with a 3x3 square at full intensity when `mark_query`.
GrayImage render_attention_map(const AttentionState& s, AttentionKind which, std::size_t query, std::size_t hr_h,
                               std::size_t hr_w, bool mark_query = true);

AttentionKind parse_attention_kind(std::string_view s);

}  // namespace segsr
