#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "segsr/ops.hpp"
#include "segsr/params.hpp"

namespace segsr {

// Segmentation categories carried by a probability map, in channel order.
enum class SegCategory : std::uint8_t { sky, mountain, plant, grass, water, animal, building, background };
inline constexpr std::size_t kSegChannels = 8;
// Side of the non-overlapping patch the segmentation transform collapses
// into one attention position.
inline constexpr std::size_t kSegStride = 4;

std::string_view to_string(SegCategory c) noexcept;

enum class AttentionKind : std::uint8_t { feature, segmentation, combined };

struct SpsaOptions {
  // y = x + gamma * o when true; y = o otherwise.
  bool residual = true;
  std::size_t max_positions = 4096;
};

// The four N x N attention matrices of one batch item. Row j is query j's
// distribution over positions i.
struct AttentionState {
  Tensor<double> beta_fea;
  Tensor<double> beta_seg;
  Tensor<double> w_seg;
  Tensor<double> beta_combined;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;

  std::size_t positions() const noexcept { return grid_h * grid_w; }
  const Tensor<double>& matrix(AttentionKind kind) const;
};

// w = |seg - fea| / (seg + fea), 0 where both vanish.
Tensor<double> fusion_weights(const Tensor<double>& beta_seg, const Tensor<double>& beta_fea);

// mean|x| / mean|conv_out|. Throws NumericalError if either is all zero.
template <typename T>
T init_alpha(const Tensor<T>& x, const Tensor<T>& conv_out);

template <typename T>
struct SpsaParams {
  Parameter<T> f_fea;       // (C, C, 1, 1)
  Parameter<T> g_fea;       // (C, C, 1, 1)
  Parameter<T> h;           // (C, C, 1, 1)
  Parameter<T> seg_kernel;  // (C, 8, 4, 4), stride 4
  Parameter<T> alpha;       // scalar
  Parameter<T> f_seg;       // (C, C, 1, 1)
  Parameter<T> g_seg;       // (C, C, 1, 1)
  Parameter<T> gamma;       // scalar residual gate

  std::vector<Parameter<T>*> all();
};

template <typename T>
class SpsaLayer {
 public:
  struct Output {
    Var<T> y;
    Var<T> beta_fea;
    Var<T> beta_seg;
    Var<T> beta_combined;
  };

  SpsaLayer(std::size_t channels, SpsaOptions opts, Rng& rng);

  std::size_t channels() const noexcept { return channels_; }
  const SpsaOptions& options() const noexcept { return opts_; }
  SpsaParams<T>& params() noexcept { return params_; }
  const SpsaParams<T>& params() const noexcept { return params_; }

  // x (B, C, h, w) -> (B, N, N), softmax over the last axis.
  Var<T> feature_attention(ForwardContext<T>& ctx, const Var<T>& x);
  // seg (B, 8, 4h, 4w) -> z = alpha * conv(seg), (B, C, h, w).
  Var<T> seg_transform(ForwardContext<T>& ctx, const Var<T>& seg);
  // z (B, C, h, w) -> (B, N, N).
  Var<T> seg_attention(ForwardContext<T>& ctx, const Var<T>& z);

  // Full layer. `forced_attention`, when set, replaces the combined
  // attention (B, N, N); it exists for tests.
  Output forward(ForwardContext<T>& ctx, const Var<T>& x, const Var<T>& seg,
                 const std::optional<Tensor<T>>& forced_attention = std::nullopt);

  // Sets alpha from a representative (x, seg) pair and returns it.
  T calibrate_alpha(const Tensor<T>& x, const Tensor<T>& seg);

 private:
  Var<T> attention(ForwardContext<T>& ctx, const Var<T>& features, Parameter<T>& wf, Parameter<T>& wg);
  void check_positions(const Shape& x) const;

  std::size_t channels_;
  SpsaOptions opts_;
  SpsaParams<T> params_;
};

// Copies batch item `b` of a forward pass into plain matrices.
template <typename T>
AttentionState attention_state(const typename SpsaLayer<T>::Output& out, std::size_t b, std::size_t grid_h,
                               std::size_t grid_w);

extern template class SpsaLayer<float>;
extern template class SpsaLayer<double>;

}  // namespace segsr
