#include "segsr/optimizer.hpp"

#include <cmath>
#include <string>

namespace segsr {

template <typename T>
void Adam<T>::update(Parameter<T>& p, const Tensor<T>& grad, double lr) {
  require_same_shape(p.value.shape(), grad.shape(), "Adam::update");
  if (steps_ == 0) throw ConfigError("Adam::update called before begin_step");
  auto [it, inserted] = moments_.try_emplace(p.name);
  Moments& s = it->second;
  if (inserted) {
    s.m = Tensor<T>(p.value.shape());
    s.v = Tensor<T>(p.value.shape());
  }
  require_same_shape(s.m.shape(), p.value.shape(), "Adam moments");
  const double b1 = opts_.beta1, b2 = opts_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    const double m = b1 * s.m[i] + (1.0 - b1) * g;
    const double v = b2 * s.v[i] + (1.0 - b2) * g * g;
    s.m[i] = static_cast<T>(m);
    s.v[i] = static_cast<T>(v);
    p.value[i] -= static_cast<T>(lr * (m / c1) / (std::sqrt(v / c2) + opts_.eps));
  }
}

double StepDecay::at(std::uint64_t iteration) const {
  return base / std::pow(factor, static_cast<double>(iteration / interval));
}

std::string_view to_string(Phase p) noexcept { return p == Phase::gan ? "gan" : "psnr_pretrain"; }

Phase parse_phase(std::string_view s) {
  if (s == "psnr_pretrain") return Phase::psnr_pretrain;
  if (s == "gan") return Phase::gan;
  throw ConfigError("unknown phase '" + std::string(s) + "'");
}

void TrainSchedule::validate() const {
  if (!(lr_rest > 0.0) || !(lr_attention > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(decay_factor > 1.0)) throw ConfigError("decay factor must exceed 1");
  if (decay_interval == 0) throw ConfigError("decay interval must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (lambda_l1 < 0.0 || lambda_gan < 0.0) throw ConfigError("loss weights must be non-negative");
}

template class Adam<float>;
template class Adam<double>;

}  // namespace segsr
