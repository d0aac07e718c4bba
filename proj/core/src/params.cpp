#include "segsr/params.hpp"

#include <cmath>

namespace segsr {

template <typename T>
void init_uniform(Tensor<T>& t, Rng& rng, double gain) {
  const std::size_t fan_in = t.size() / t.dim(0);
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  for (T& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
Var<T> ForwardContext<T>::bind(Parameter<T>& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var<T>(&graph_, it->second);
  const bool trainable = track_ && !frozen(p.group);
  Var<T> v = trainable ? graph_.parameter(p.value) : graph_.input(p.value);
  bound_.emplace(&p, v.id());
  if (trainable) bindings_.push_back({&p, v.id()});
  return v;
}

template void init_uniform(Tensor<float>&, Rng&, double);
template void init_uniform(Tensor<double>&, Rng&, double);
template class ForwardContext<float>;
template class ForwardContext<double>;

}  // namespace segsr
