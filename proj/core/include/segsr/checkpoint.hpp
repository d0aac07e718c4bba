#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "segsr/trainer.hpp"

namespace segsr {

struct TensorRecord {
  std::string name;
  ParamGroup group = ParamGroup::rest;
  Tensor<float> value;
};

struct MomentRecord {
  std::string name;
  Tensor<float> m;
  Tensor<float> v;
};

// Binary layout, all integers little-endian:
//   "SPSA" | u32 version
//   config:     u32 n, n x (str key, str value)
//   run config: str
//   params:     u32 n, n x (str name, u8 group, u8 rank, rank x u32, f32 data)
//   masks:      u32 rrdbs, u32 layers, per rrdb/block/layer l>=2 (l-1) x u8
//   optimiser:  2 x (u64 steps, u32 n, n x (str name, u8 rank, dims, m, v))
// where str = u32 length + bytes. No timestamps are stored.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  std::uint64_t iteration = 0;
  Phase phase = Phase::psnr_pretrain;
  bool alpha_calibrated = false;
  std::string run_config;
  std::vector<TensorRecord> params;  // "g." and "d." prefixed
  MaskSet masks;
  std::uint64_t steps_g = 0;
  std::uint64_t steps_d = 0;
  std::vector<MomentRecord> moments_g;
  std::vector<MomentRecord> moments_d;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint capture(Model& model, std::string run_config = {});
// Rebuilds a model; every stored parameter must match the architecture.
Model restore(const Checkpoint& ckpt);

}  // namespace segsr
