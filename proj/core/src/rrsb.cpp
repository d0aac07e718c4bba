#include "segsr/rrsb.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

namespace segsr {

BlockMask BlockMask::full(std::size_t layers) {
  BlockMask m;
  m.keep_.resize(layers);
  for (std::size_t l = 1; l <= layers; ++l) m.keep_[l - 1].assign(l - 1, true);
  return m;
}

void BlockMask::check(std::size_t layer, std::size_t candidate) const {
  if (layer == 0 || layer > keep_.size() || candidate == 0 || candidate >= layer) {
    throw ConfigError("BlockMask: no connection x_" + std::to_string(candidate) + " -> layer " + std::to_string(layer));
  }
}

bool BlockMask::keep(std::size_t layer, std::size_t candidate) const {
  check(layer, candidate);
  return keep_[layer - 1][candidate - 1];
}

void BlockMask::set(std::size_t layer, std::size_t candidate, bool keep) {
  check(layer, candidate);
  keep_[layer - 1][candidate - 1] = keep;
}

const std::vector<bool>& BlockMask::flags(std::size_t layer) const {
  if (layer == 0 || layer > keep_.size()) throw ConfigError("BlockMask: layer " + std::to_string(layer) + " out of range");
  return keep_[layer - 1];
}

std::size_t BlockMask::kept(std::size_t layer) const {
  const auto& f = flags(layer);
  return static_cast<std::size_t>(std::count(f.begin(), f.end(), true));
}

std::size_t BlockMask::connections() const {
  std::size_t n = 0;
  for (std::size_t l = 1; l <= keep_.size(); ++l) n += kept(l);
  return n;
}

std::size_t BlockMask::candidates() const {
  const std::size_t k = keep_.size();
  return k == 0 ? 0 : k * (k - 1) / 2;
}

MaskSet full_masks(std::size_t rrdbs, std::size_t layers) {
  RrdbMask one;
  one.fill(BlockMask::full(layers));
  return MaskSet(rrdbs, one);
}

void DenseBlockConfig::validate() const {
  if (channels == 0) throw ConfigError("dense block: channels must be positive");
  if (layers < 2) throw ConfigError("dense block: need at least 2 layers, got " + std::to_string(layers));
  if (!(res_scale >= 0.0 && res_scale <= 1.0)) throw ConfigError("dense block: residual scaling must lie in [0, 1]");
  if (!(slope > 0.0 && slope < 1.0)) throw ConfigError("dense block: leaky slope must lie in (0, 1)");
}

// ---------------------------------------------------------------- DenseBlock

template <typename T>
DenseBlock<T>::DenseBlock(const std::string& prefix, DenseBlockConfig cfg, BlockMask mask, Rng& rng,
                          double init_gain)
    : cfg_(cfg), mask_(std::move(mask)) {
  cfg_.validate();
  if (mask_.layers() != cfg_.layers) throw ConfigError("dense block: mask layer count does not match config");
  const std::size_t c = cfg_.channels;
  for (std::size_t l = 1; l <= cfg_.layers; ++l) {
    const std::size_t in = c * (1 + mask_.kept(l));
    const std::string base = prefix + ".conv" + std::to_string(l);
    ConvParams<T> p{{base + ".weight", Tensor<T>(Shape{c, in, 3, 3})}, {base + ".bias", Tensor<T>(Shape{c})}};
    init_uniform(p.weight.value, rng, init_gain);
    layers_.push_back(std::move(p));
  }
}

template <typename T>
DenseBlock<T>::DenseBlock(DenseBlockConfig cfg, BlockMask mask, std::vector<ConvParams<T>> layers)
    : cfg_(cfg), mask_(std::move(mask)), layers_(std::move(layers)) {
  cfg_.validate();
  validate();
}

template <typename T>
void DenseBlock<T>::validate() const {
  if (mask_.layers() != cfg_.layers || layers_.size() != cfg_.layers) {
    throw ConfigError("dense block: expected " + std::to_string(cfg_.layers) + " layers and masks");
  }
  const std::size_t c = cfg_.channels;
  for (std::size_t l = 1; l <= cfg_.layers; ++l) {
    const Shape want{c, c * (1 + mask_.kept(l)), 3, 3};
    const Shape& got = layers_[l - 1].weight.value.shape();
    if (!(got == want)) {
      throw ShapeError("dense block layer " + std::to_string(l) + ": kernel " + got.str() + " inconsistent with mask (" +
                       want.str() + " expected)");
    }
    if (layers_[l - 1].bias.value.size() != c) throw ShapeError("dense block layer " + std::to_string(l) + ": bad bias");
  }
}

template <typename T>
DenseBlockTrace<T> DenseBlock<T>::forward(ForwardContext<T>& ctx, const Var<T>& x0) {
  const Shape& s = x0.shape();
  if (s.rank() != 4 || s[1] != cfg_.channels) {
    throw ShapeError("dense block: input " + s.str() + " does not have " + std::to_string(cfg_.channels) + " channels");
  }
  DenseBlockTrace<T> trace;
  std::vector<Var<T>> inputs;
  for (std::size_t l = 1; l <= cfg_.layers; ++l) {
    inputs.assign(1, x0);
    for (std::size_t i = 1; i < l; ++i)
      if (mask_.keep(l, i)) inputs.push_back(trace.features[i - 1]);
    Var<T> cat = inputs.size() == 1 ? x0 : concat_channels<T>(inputs);
    ConvParams<T>& p = layers_[l - 1];
    Var<T> y = bias_add(conv2d(cat, ctx.bind(p.weight), Conv2dOptions{1, 1}), ctx.bind(p.bias));
    trace.features.push_back(leaky_relu(y, static_cast<T>(cfg_.slope)));
  }
  trace.output = add(x0, scale(trace.features.back(), static_cast<T>(cfg_.res_scale)));
  return trace;
}

template <typename T>
void DenseBlock<T>::append_parameters(std::vector<Parameter<T>*>& out) {
  for (ConvParams<T>& p : layers_) {
    out.push_back(&p.weight);
    out.push_back(&p.bias);
  }
}

// ---------------------------------------------------------------- Rrdb

namespace {

template <typename T>
std::array<DenseBlock<T>, kBlocksPerRrdb> make_blocks(const std::string& prefix, DenseBlockConfig cfg,
                                                      const RrdbMask& masks, Rng& rng, double gain) {
  return {DenseBlock<T>(prefix + ".block0", cfg, masks[0], rng, gain),
          DenseBlock<T>(prefix + ".block1", cfg, masks[1], rng, gain),
          DenseBlock<T>(prefix + ".block2", cfg, masks[2], rng, gain)};
}

}  // namespace

template <typename T>
Rrdb<T>::Rrdb(const std::string& prefix, DenseBlockConfig cfg, const RrdbMask& masks, Rng& rng, double init_gain)
    : blocks_(make_blocks<T>(prefix, cfg, masks, rng, init_gain)) {}

template <typename T>
Rrdb<T>::Rrdb(std::array<DenseBlock<T>, kBlocksPerRrdb> blocks) : blocks_(std::move(blocks)) {}

template <typename T>
RrdbTrace<T> Rrdb<T>::forward(ForwardContext<T>& ctx, const Var<T>& x) {
  RrdbTrace<T> trace;
  Var<T> h = x;
  for (std::size_t k = 0; k < kBlocksPerRrdb; ++k) {
    trace.blocks[k] = blocks_[k].forward(ctx, h);
    h = trace.blocks[k].output;
  }
  trace.output = add(x, scale(h, static_cast<T>(blocks_[0].config().res_scale)));
  return trace;
}

template <typename T>
RrdbMask Rrdb<T>::masks() const {
  return {blocks_[0].mask(), blocks_[1].mask(), blocks_[2].mask()};
}

template <typename T>
void Rrdb<T>::append_parameters(std::vector<Parameter<T>*>& out) {
  for (DenseBlock<T>& b : blocks_) b.append_parameters(out);
}

// ---------------------------------------------------------------- MACs

std::uint64_t dense_block_macs(std::size_t channels, const BlockMask& mask, std::size_t h, std::size_t w) {
  std::uint64_t total = 0;
  const std::uint64_t per_input = static_cast<std::uint64_t>(h) * w * 9 * channels * channels;
  for (std::size_t l = 1; l <= mask.layers(); ++l) total += per_input * (1 + mask.kept(l));
  return total;
}

std::uint64_t trunk_macs(std::size_t channels, const MaskSet& masks, std::size_t h, std::size_t w) {
  std::uint64_t total = 0;
  for (const RrdbMask& r : masks)
    for (const BlockMask& m : r) total += dense_block_macs(channels, m, h, w);
  return total;
}

// ---------------------------------------------------------------- pruning statistics

template <typename T>
std::vector<double> dissimilarity(std::span<const Tensor<T>* const> features) {
  if (features.size() < 2) throw ConfigError("dissimilarity: need at least two feature maps");
  const Tensor<T>& last = *features.back();
  std::vector<double> dist;
  for (std::size_t i = 0; i + 1 < features.size(); ++i) {
    require_same_shape(features[i]->shape(), last.shape(), "dissimilarity");
    double acc = 0.0;
    for (std::size_t k = 0; k < last.size(); ++k) {
      const double d = static_cast<double>((*features[i])[k]) - static_cast<double>(last[k]);
      acc += d * d;
    }
    dist.push_back(std::sqrt(acc));
  }
  const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
  if (total == 0.0) {
    std::fill(dist.begin(), dist.end(), 1.0 / static_cast<double>(dist.size()));
  } else {
    for (double& d : dist) d /= total;
  }
  return dist;
}

KMeansSplit kmeans_two(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw ConfigError("kmeans_two: need at least two values, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  std::vector<double> prefix(n + 1, 0.0), prefix_sq(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = values[order[i]];
    prefix[i + 1] = prefix[i] + v;
    prefix_sq[i + 1] = prefix_sq[i] + v * v;
  }
  auto sse = [&](std::size_t lo, std::size_t hi) {
    const double cnt = static_cast<double>(hi - lo);
    const double s = prefix[hi] - prefix[lo];
    return std::max(0.0, (prefix_sq[hi] - prefix_sq[lo]) - s * s / cnt);
  };
  std::size_t best = 1;
  double best_ss = sse(0, 1) + sse(1, n);
  for (std::size_t k = 2; k < n; ++k) {
    const double ss = sse(0, k) + sse(k, n);
    if (ss < best_ss) {
      best_ss = ss;
      best = k;
    }
  }
  KMeansSplit out;
  out.low.assign(order.begin(), order.begin() + static_cast<long>(best));
  out.high.assign(order.begin() + static_cast<long>(best), order.end());
  std::sort(out.low.begin(), out.low.end());
  std::sort(out.high.begin(), out.high.end());
  out.mean_low = prefix[best] / static_cast<double>(best);
  out.mean_high = (prefix[n] - prefix[best]) / static_cast<double>(n - best);
  out.within_ss = best_ss;
  return out;
}

std::string_view to_string(PruneOutcome o) noexcept {
  switch (o) {
    case PruneOutcome::too_few: return "too_few";
    case PruneOutcome::keep_all: return "keep_all";
    case PruneOutcome::pruned: return "pruned";
  }
  return "unknown";
}

PruneDecision prune_decision(std::span<const double> avg_ds, double epsilon) {
  PruneDecision d;
  d.keep.assign(avg_ds.size(), true);
  if (avg_ds.size() < 2) {
    d.outcome = PruneOutcome::too_few;
    return d;
  }
  const KMeansSplit split = kmeans_two(avg_ds);
  d.mean_low = split.mean_low;
  d.mean_high = split.mean_high;
  if (split.mean_high <= 0.0 || (split.mean_high - split.mean_low) / split.mean_high < epsilon) {
    d.outcome = PruneOutcome::keep_all;
    return d;
  }
  for (std::size_t i : split.low) d.keep[i] = false;
  d.outcome = PruneOutcome::pruned;
  return d;
}

std::string to_string(const LayerKey& k) {
  return "rrdb" + std::to_string(k.rrdb) + ".block" + std::to_string(k.block) + ".layer" + std::to_string(k.layer);
}

PruneStats::PruneStats(std::size_t window) : window_(window) {
  if (window == 0) throw ConfigError("PruneStats: window must be at least 1");
}

void PruneStats::record(const LayerKey& key, std::vector<double> ds) {
  Entry& e = entries_[key];
  if (e.length == 0) {
    e.length = ds.size();
  } else if (e.length != ds.size()) {
    throw ShapeError("PruneStats: " + to_string(key) + " recorded " + std::to_string(ds.size()) +
                     " dissimilarities after " + std::to_string(e.length));
  }
  e.ring.push_back(std::move(ds));
  while (e.ring.size() > window_) e.ring.pop_front();
}

void PruneStats::check_shape(const LayerKey& key, const Shape& shape) {
  Entry& e = entries_[key];
  if (!e.has_shape) {
    e.feature_shape = shape;
    e.has_shape = true;
  } else if (!(e.feature_shape == shape)) {
    throw ShapeError("PruneStats: " + to_string(key) + " feature shape drifted from " + e.feature_shape.str() + " to " +
                     shape.str());
  }
}

std::size_t PruneStats::count(const LayerKey& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? 0 : it->second.ring.size();
}

std::vector<double> PruneStats::average(const LayerKey& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end() || it->second.ring.empty()) throw ConfigError("PruneStats: no statistics for " + to_string(key));
  const auto& ring = it->second.ring;
  std::vector<double> avg(ring.front().size(), 0.0);
  for (const auto& v : ring)
    for (std::size_t i = 0; i < v.size(); ++i) avg[i] += v[i];
  for (double& a : avg) a /= static_cast<double>(ring.size());
  return avg;
}

template <typename T>
void record_stats(PruneStats& stats, std::span<const RrdbTrace<T>> traces, const MaskSet& masks) {
  if (masks.size() != traces.size()) throw ShapeError("record_stats: trace and mask counts differ");
  for (const RrdbMask& r : masks)
    for (const BlockMask& m : r)
      if (!m.is_full()) throw ConfigError("record_stats: statistics must come from a dense (unpruned) network");
  for (std::size_t r = 0; r < traces.size(); ++r) {
    for (std::size_t b = 0; b < kBlocksPerRrdb; ++b) {
      const auto& feats = traces[r].blocks[b].features;
      std::vector<const Tensor<T>*> values;
      for (const Var<T>& f : feats) values.push_back(&f.value());
      for (std::size_t l = 2; l <= feats.size(); ++l) {
        const LayerKey key{r, b, l};
        stats.check_shape(key, values[l - 1]->shape());
        stats.record(key, dissimilarity<T>(std::span<const Tensor<T>* const>(values.data(), l)));
      }
    }
  }
}

PruneResult prune_network(const PruneStats& stats, double epsilon, std::size_t rrdbs, std::size_t layers,
                          std::size_t channels, std::size_t h, std::size_t w) {
  PruneResult res;
  res.masks = full_masks(rrdbs, layers);
  res.report.epsilon = epsilon;
  res.report.feature_h = h;
  res.report.feature_w = w;
  res.report.macs_before = trunk_macs(channels, res.masks, h, w);
  for (std::size_t r = 0; r < rrdbs; ++r)
    for (std::size_t b = 0; b < kBlocksPerRrdb; ++b) {
      res.report.connections_before += res.masks[r][b].connections();
      for (std::size_t l = 2; l <= layers; ++l) {
        const LayerKey key{r, b, l};
        if (stats.count(key) == 0) throw ConfigError("prune_network: missing statistics for " + to_string(key));
        LayerPruneEntry e{key, stats.average(key), {}};
        if (e.avg_ds.size() != l - 1) throw ShapeError("prune_network: " + to_string(key) + " has wrong DS length");
        e.decision = prune_decision(e.avg_ds, epsilon);
        for (std::size_t i = 1; i < l; ++i) res.masks[r][b].set(l, i, e.decision.keep[i - 1]);
        res.report.layers.push_back(std::move(e));
      }
      res.report.connections_after += res.masks[r][b].connections();
    }
  res.report.macs_after = trunk_macs(channels, res.masks, h, w);
  return res;
}

namespace {

std::string join(const std::vector<double>& v) {
  std::ostringstream os;
  os << std::setprecision(9);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::string join(const std::vector<bool>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += v[i] ? '1' : '0';
  }
  return s;
}

}  // namespace

void write_report_text(std::ostream& os, const PruneReport& r) {
  os << "pruning report (epsilon " << r.epsilon << ", feature map " << r.feature_h << "x" << r.feature_w << ")\n";
  for (const LayerPruneEntry& e : r.layers) {
    os << "  " << to_string(e.key) << ": " << to_string(e.decision.outcome) << "  avg_ds [" << join(e.avg_ds)
       << "]  keep [" << join(e.decision.keep) << "]";
    if (e.decision.outcome != PruneOutcome::too_few) {
      os << "  cluster means " << e.decision.mean_low << " / " << e.decision.mean_high;
    }
    os << '\n';
  }
  os << "connections: " << r.connections_before << " -> " << r.connections_after << " (" << r.removed()
     << " removed)\n";
  os << "trunk MACs: " << r.macs_before << " -> " << r.macs_after << '\n';
  if (r.removed() == 0) os << "all connections retained\n";
}

void write_report_kv(std::ostream& os, const PruneReport& r) {
  os << std::setprecision(9);
  os << "epsilon=" << r.epsilon << '\n';
  os << "feature_h=" << r.feature_h << '\n';
  os << "feature_w=" << r.feature_w << '\n';
  os << "connections_before=" << r.connections_before << '\n';
  os << "connections_after=" << r.connections_after << '\n';
  os << "connections_removed=" << r.removed() << '\n';
  os << "macs_before=" << r.macs_before << '\n';
  os << "macs_after=" << r.macs_after << '\n';
  for (const LayerPruneEntry& e : r.layers) {
    const std::string k = to_string(e.key);
    os << k << ".outcome=" << to_string(e.decision.outcome) << '\n';
    os << k << ".avg_ds=" << join(e.avg_ds) << '\n';
    os << k << ".keep=" << join(e.decision.keep) << '\n';
    os << k << ".mean_low=" << e.decision.mean_low << '\n';
    os << k << ".mean_high=" << e.decision.mean_high << '\n';
  }
}

template class DenseBlock<float>;
template class DenseBlock<double>;
template class Rrdb<float>;
template class Rrdb<double>;
template std::vector<double> dissimilarity<float>(std::span<const Tensor<float>* const>);
template std::vector<double> dissimilarity<double>(std::span<const Tensor<double>* const>);
template void record_stats<float>(PruneStats&, std::span<const RrdbTrace<float>>, const MaskSet&);
template void record_stats<double>(PruneStats&, std::span<const RrdbTrace<double>>, const MaskSet&);

}  // namespace segsr
