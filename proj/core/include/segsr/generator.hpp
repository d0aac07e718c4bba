#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "segsr/rrsb.hpp"
#include "segsr/spsa.hpp"

namespace segsr {

struct GeneratorConfig {
  std::size_t n_blocks = 3;
  std::size_t channels = 16;
  std::size_t block_channels = 16;
  std::size_t block_layers = 5;
  double res_scale = 0.2;
  double slope = 0.2;
  std::size_t upscale = 4;
  bool spsa_residual = true;
  std::size_t max_attention_positions = 4096;

  void validate() const;
  DenseBlockConfig block_config() const;

  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

// head conv -> RRDB/RRSB trunk -> SPSA -> 2x (nearest x2 + conv) -> two
// tail convs -> RGB.
template <typename T>
class Generator {
 public:
  struct ForwardOptions {
    bool spsa_enabled = true;
    std::optional<Tensor<T>> forced_attention;
  };

  struct Output {
    Var<T> sr;
    Var<T> features;  // trunk output fed to the attention layer
    std::vector<RrdbTrace<T>> trunk;
    std::optional<typename SpsaLayer<T>::Output> attention;
  };

  // Empty `masks` means dense blocks everywhere.
  Generator(GeneratorConfig cfg, std::uint64_t seed, MaskSet masks = {});

  // lr (B, 3, h, w), seg (B, 8, 4h, 4w) -> sr (B, 3, 4h, 4w).
  Output forward(ForwardContext<T>& ctx, const Var<T>& lr, const Var<T>& seg, const ForwardOptions& opts);
  Output forward(ForwardContext<T>& ctx, const Var<T>& lr, const Var<T>& seg) {
    return forward(ctx, lr, seg, ForwardOptions{});
  }

  // Head + trunk only; used for pruning statistics.
  std::pair<Var<T>, std::vector<RrdbTrace<T>>> trunk(ForwardContext<T>& ctx, const Var<T>& lr);

  const GeneratorConfig& config() const noexcept { return cfg_; }
  MaskSet masks() const;
  SpsaLayer<T>& spsa() noexcept { return spsa_; }
  std::vector<Rrdb<T>>& blocks() noexcept { return rrdbs_; }

  std::vector<Parameter<T>*> parameters();
  std::size_t parameter_count();

  bool alpha_calibrated() const noexcept { return alpha_calibrated_; }
  void set_alpha_calibrated(bool v) noexcept { alpha_calibrated_ = v; }
  // Sets alpha from the trunk features of (lr, seg).
  void calibrate_alpha(const Tensor<T>& lr, const Tensor<T>& seg);

 private:
  Generator(const GeneratorConfig& cfg, const MaskSet& masks, Rng&& rng);
  Var<T> conv(ForwardContext<T>& ctx, const Var<T>& x, ConvParams<T>& p);

  GeneratorConfig cfg_;
  ConvParams<T> head_;
  std::vector<Rrdb<T>> rrdbs_;
  SpsaLayer<T> spsa_;
  std::vector<ConvParams<T>> up_;
  std::vector<ConvParams<T>> tail_;
  bool alpha_calibrated_ = false;
};

struct DiscriminatorConfig {
  std::size_t input_size = 96;
  std::size_t base_channels = 8;
  std::size_t stages = 4;
  std::size_t hidden = 32;
  double slope = 0.2;

  void validate() const;
  friend bool operator==(const DiscriminatorConfig&, const DiscriminatorConfig&) = default;
};

// VGG-style critic: per stage a 3x3 conv and a stride-2 4x4 conv with
// doubled width, then two dense layers to one logit per image.
template <typename T>
class Discriminator {
 public:
  Discriminator(DiscriminatorConfig cfg, std::uint64_t seed);

  // img (B, 3, S, S) -> logits (B, 1).
  Var<T> forward(ForwardContext<T>& ctx, const Var<T>& img);

  const DiscriminatorConfig& config() const noexcept { return cfg_; }
  std::vector<Parameter<T>*> parameters();
  ConvParams<T>& final_layer() noexcept { return dense_.back(); }

 private:
  DiscriminatorConfig cfg_;
  std::vector<ConvParams<T>> convs_;
  std::vector<ConvParams<T>> dense_;
};

template <typename T>
Var<T> l1_loss(const Var<T>& sr, const Var<T>& hr);

enum class GanLossKind : std::uint8_t { standard, relativistic };
std::string_view to_string(GanLossKind k) noexcept;
GanLossKind parse_gan_loss(std::string_view s);

template <typename T>
struct GanLosses {
  Var<T> g_loss;
  Var<T> d_loss;
};

// standard:     d = sp(-real) + sp(fake),  g = sp(-fake)
// relativistic: logits taken relative to the other batch's mean.
// sp = softplus, averaged over the batch.
template <typename T>
GanLosses<T> gan_losses(const Var<T>& d_real, const Var<T>& d_fake, GanLossKind kind = GanLossKind::standard);

extern template class Generator<float>;
extern template class Generator<double>;
extern template class Discriminator<float>;
extern template class Discriminator<double>;

}  // namespace segsr
