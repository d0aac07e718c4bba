#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "segsr/ops.hpp"
#include "segsr/params.hpp"

namespace segsr {

inline constexpr std::size_t kBlocksPerRrdb = 3;

// Keep flags for the dense connections of one block. Layer l (1-based)
// always receives the block input x_0; flag (l, i) says whether it also
// receives x_i for 1 <= i < l.
class BlockMask {
 public:
  BlockMask() = default;
  static BlockMask full(std::size_t layers);

  std::size_t layers() const noexcept { return keep_.size(); }
  bool keep(std::size_t layer, std::size_t candidate) const;
  void set(std::size_t layer, std::size_t candidate, bool keep);
  const std::vector<bool>& flags(std::size_t layer) const;

  // Kept candidates of `layer` (x_0 not counted).
  std::size_t kept(std::size_t layer) const;
  // Kept / total prunable connections over all layers.
  std::size_t connections() const;
  std::size_t candidates() const;
  bool is_full() const { return connections() == candidates(); }

  friend bool operator==(const BlockMask&, const BlockMask&) = default;

 private:
  void check(std::size_t layer, std::size_t candidate) const;
  std::vector<std::vector<bool>> keep_;
};

using RrdbMask = std::array<BlockMask, kBlocksPerRrdb>;
using MaskSet = std::vector<RrdbMask>;

MaskSet full_masks(std::size_t rrdbs, std::size_t layers);

struct DenseBlockConfig {
  std::size_t channels = 16;
  std::size_t layers = 5;
  double res_scale = 0.2;
  double slope = 0.2;

  void validate() const;
};

template <typename T>
struct ConvParams {
  Parameter<T> weight;
  Parameter<T> bias;
};

template <typename T>
struct DenseBlockTrace {
  Var<T> output;
  std::vector<Var<T>> features;  // x_1 .. x_K
};

// K 3x3 conv + leaky-ReLU layers over the concatenation of x_0 and the
// mask-kept earlier outputs; output = x_0 + res_scale * x_K.
template <typename T>
class DenseBlock {
 public:
  DenseBlock(const std::string& prefix, DenseBlockConfig cfg, BlockMask mask, Rng& rng, double init_gain);
  // Adopts existing layer parameters; rejects kernels whose input-channel
  // count disagrees with the mask.
  DenseBlock(DenseBlockConfig cfg, BlockMask mask, std::vector<ConvParams<T>> layers);

  DenseBlockTrace<T> forward(ForwardContext<T>& ctx, const Var<T>& x0);

  const DenseBlockConfig& config() const noexcept { return cfg_; }
  const BlockMask& mask() const noexcept { return mask_; }
  std::vector<ConvParams<T>>& layers() noexcept { return layers_; }
  void append_parameters(std::vector<Parameter<T>*>& out);

 private:
  void validate() const;

  DenseBlockConfig cfg_;
  BlockMask mask_;
  std::vector<ConvParams<T>> layers_;
};

template <typename T>
struct RrdbTrace {
  Var<T> output;
  std::array<DenseBlockTrace<T>, kBlocksPerRrdb> blocks;
};

// Three dense blocks with an outer residual: x + res_scale * chain(x).
template <typename T>
class Rrdb {
 public:
  Rrdb(const std::string& prefix, DenseBlockConfig cfg, const RrdbMask& masks, Rng& rng, double init_gain);
  explicit Rrdb(std::array<DenseBlock<T>, kBlocksPerRrdb> blocks);

  RrdbTrace<T> forward(ForwardContext<T>& ctx, const Var<T>& x);

  std::array<DenseBlock<T>, kBlocksPerRrdb>& blocks() noexcept { return blocks_; }
  RrdbMask masks() const;
  void append_parameters(std::vector<Parameter<T>*>& out);

 private:
  std::array<DenseBlock<T>, kBlocksPerRrdb> blocks_;
};

// Closed-form multiply-accumulate count of one block on an h x w map.
std::uint64_t dense_block_macs(std::size_t channels, const BlockMask& mask, std::size_t h, std::size_t w);
std::uint64_t trunk_macs(std::size_t channels, const MaskSet& masks, std::size_t h, std::size_t w);

// Normalised distances of x_1..x_{l-1} to x_l (the last entry of
// `features`). All-zero distances yield the uniform vector.
template <typename T>
std::vector<double> dissimilarity(std::span<const Tensor<T>* const> features);

struct KMeansSplit {
  std::vector<std::size_t> low;   // indices into the input, ascending
  std::vector<std::size_t> high;
  double mean_low = 0.0;
  double mean_high = 0.0;
  double within_ss = 0.0;
};

// Exact two-cluster k-means in one dimension (optimal contiguous split of
// the sorted values). Needs at least two values.
KMeansSplit kmeans_two(std::span<const double> values);

enum class PruneOutcome : std::uint8_t { too_few, keep_all, pruned };
std::string_view to_string(PruneOutcome o) noexcept;

struct PruneDecision {
  std::vector<bool> keep;
  PruneOutcome outcome = PruneOutcome::too_few;
  double mean_low = 0.0;
  double mean_high = 0.0;
};

PruneDecision prune_decision(std::span<const double> avg_ds, double epsilon = 0.05);

struct LayerKey {
  std::size_t rrdb = 0;
  std::size_t block = 0;
  std::size_t layer = 0;
  auto operator<=>(const LayerKey&) const = default;
};

std::string to_string(const LayerKey& k);

// Ring buffers of recent dissimilarity vectors per (rrdb, block, layer).
class PruneStats {
 public:
  explicit PruneStats(std::size_t window = 100);

  std::size_t window() const noexcept { return window_; }
  void record(const LayerKey& key, std::vector<double> ds);
  bool has(const LayerKey& key) const { return entries_.count(key) != 0; }
  std::size_t count(const LayerKey& key) const;
  std::vector<double> average(const LayerKey& key) const;
  std::size_t size() const noexcept { return entries_.size(); }

  // Remembers the feature shape per key and rejects drift.
  void check_shape(const LayerKey& key, const Shape& shape);

 private:
  struct Entry {
    std::deque<std::vector<double>> ring;
    std::size_t length = 0;
    Shape feature_shape;
    bool has_shape = false;
  };
  std::size_t window_;
  std::map<LayerKey, Entry> entries_;
};

// Appends the dissimilarity vectors of every block traced in a dense
// forward pass.
template <typename T>
void record_stats(PruneStats& stats, std::span<const RrdbTrace<T>> traces, const MaskSet& masks);

struct LayerPruneEntry {
  LayerKey key;
  std::vector<double> avg_ds;
  PruneDecision decision;
};

struct PruneReport {
  std::vector<LayerPruneEntry> layers;
  std::size_t connections_before = 0;
  std::size_t connections_after = 0;
  std::uint64_t macs_before = 0;
  std::uint64_t macs_after = 0;
  std::size_t feature_h = 0;
  std::size_t feature_w = 0;
  double epsilon = 0.05;

  std::size_t removed() const noexcept { return connections_before - connections_after; }
};

struct PruneResult {
  MaskSet masks;
  PruneReport report;
};

// Decides every prunable layer (l >= 2) of `rrdbs` dense RRDBs with
// `layers` conv layers per block. MACs are counted on an h x w map.
PruneResult prune_network(const PruneStats& stats, double epsilon, std::size_t rrdbs, std::size_t layers,
                          std::size_t channels, std::size_t h, std::size_t w);

void write_report_text(std::ostream& os, const PruneReport& r);
void write_report_kv(std::ostream& os, const PruneReport& r);

extern template class DenseBlock<float>;
extern template class DenseBlock<double>;
extern template class Rrdb<float>;
extern template class Rrdb<double>;

}  // namespace segsr
