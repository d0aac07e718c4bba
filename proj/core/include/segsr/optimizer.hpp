#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "segsr/params.hpp"

namespace segsr {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment state is keyed by parameter name.
template <typename T>
class Adam {
 public:
  struct Moments {
    Tensor<T> m;
    Tensor<T> v;
  };

  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  const AdamOptions& options() const noexcept { return opts_; }
  void set_options(const AdamOptions& opts) { opts_ = opts; }

  // Starts a new step; bias correction uses the incremented count.
  void begin_step() { ++steps_; }
  // Applies one update to `p` using the current step count.
  void update(Parameter<T>& p, const Tensor<T>& grad, double lr);

  std::uint64_t steps() const noexcept { return steps_; }
  void set_steps(std::uint64_t s) noexcept { steps_ = s; }
  const std::map<std::string, Moments>& moments() const noexcept { return moments_; }
  void set_moments(std::string name, Moments m) { moments_[std::move(name)] = std::move(m); }
  void reset() {
    steps_ = 0;
    moments_.clear();
  }

 private:
  AdamOptions opts_;
  std::uint64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

// base / factor^floor(iteration / interval), iterations counted from 0.
struct StepDecay {
  double base = 2e-4;
  double factor = 2.0;
  std::uint64_t interval = 200000;

  double at(std::uint64_t iteration) const;
};

enum class Phase : std::uint8_t { psnr_pretrain, gan };
std::string_view to_string(Phase p) noexcept;
Phase parse_phase(std::string_view s);

struct TrainSchedule {
  Phase phase = Phase::psnr_pretrain;
  double lr_rest = 2e-4;
  double lr_attention = 2e-4;
  double decay_factor = 2.0;
  std::uint64_t decay_interval = 200000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t batch_size = 16;
  std::uint64_t iterations = 1000;
  std::uint64_t seed = 0;
  double lambda_l1 = 1e-2;
  double lambda_gan = 5e-3;

  void validate() const;
  StepDecay rest() const { return {lr_rest, decay_factor, decay_interval}; }
  StepDecay attention() const { return {lr_attention, decay_factor, decay_interval}; }
  double lr(ParamGroup g, std::uint64_t iteration) const {
    return (g == ParamGroup::attention ? attention() : rest()).at(iteration);
  }
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace segsr
