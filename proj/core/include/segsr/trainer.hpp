#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

#include "segsr/dataset.hpp"
#include "segsr/generator.hpp"
#include "segsr/optimizer.hpp"

namespace segsr {

// Everything a training run mutates.
struct Model {
  Generator<float> generator;
  Discriminator<float> discriminator;
  Adam<float> opt_g;
  Adam<float> opt_d;
  std::uint64_t iteration = 0;
  Phase phase = Phase::psnr_pretrain;

  Model(const GeneratorConfig& g, const DiscriminatorConfig& d, std::uint64_t seed, MaskSet masks = {});
};

// Switches a pretrained model to the adversarial phase: the iteration
// counter and both optimisers restart.
void begin_gan_phase(Model& m);

struct LossRecord {
  std::uint64_t iteration = 0;
  Phase phase = Phase::psnr_pretrain;
  double l1 = 0.0;
  double g_adv = 0.0;
  double g_total = 0.0;
  double d_loss = 0.0;
  double d_real = 0.0;  // mean discriminator logit on HR crops
  double d_fake = 0.0;  // mean discriminator logit on SR output
  double lr_rest = 0.0;
  double lr_attention = 0.0;
};

void write_loss_header(std::ostream& os);
void write_loss_row(std::ostream& os, const LossRecord& r);

struct TrainOptions {
  TrainSchedule schedule;
  GanLossKind gan_loss = GanLossKind::standard;
  // Where a diagnostic dump goes if a loss turns non-finite.
  std::filesystem::path dump_dir = ".";
  std::function<void(const LossRecord&)> on_iteration;
};

// Runs iterations model.iteration .. schedule.iterations - 1 of the
// model's phase. Batches depend only on (seed, phase, iteration), so a
// resumed run sees the same data as an uninterrupted one.
std::vector<LossRecord> train(Model& model, const Dataset& data, const TrainOptions& opts);

// Per-iteration sampling seed.
std::uint64_t batch_seed(std::uint64_t seed, Phase phase, std::uint64_t iteration);

// Forward pass without gradient tracking; output clamped to [0, 1].
// lr (B, 3, h, w), seg (B, 8, 4h, 4w).
Tensor<float> infer(Generator<float>& g, const Tensor<float>& lr, const Tensor<float>& seg);

// Attention matrices of batch item 0 of a forward pass.
AttentionState infer_attention(Generator<float>& g, const Tensor<float>& lr, const Tensor<float>& seg);

}  // namespace segsr
