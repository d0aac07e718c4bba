#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "segsr/graph.hpp"
#include "segsr/rng.hpp"

namespace segsr {

// Optimiser partition: the attention layer trains at its own learning rate.
enum class ParamGroup : std::uint8_t { rest = 0, attention = 1 };

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  ParamGroup group = ParamGroup::rest;
};

// Uniform(-bound, bound) with bound = gain * sqrt(3 / fan_in), fan_in taken
// as numel / extent(0).
template <typename T>
void init_uniform(Tensor<T>& t, Rng& rng, double gain = 1.0);

// Binds persistent parameters into one graph evaluation. Each parameter is
// bound at most once so fan-out gradients accumulate in a single node.
template <typename T>
class ForwardContext {
 public:
  struct Binding {
    Parameter<T>* param;
    NodeId node;
  };

  explicit ForwardContext(Graph<T>& graph, bool track_gradients = true) : graph_(graph), track_(track_gradients) {}

  Graph<T>& graph() { return graph_; }
  bool tracking() const noexcept { return track_; }

  // Parameters of a frozen group are bound as constants.
  void freeze(ParamGroup group, bool frozen = true) { frozen_[static_cast<int>(group)] = frozen; }
  bool frozen(ParamGroup group) const { return frozen_[static_cast<int>(group)]; }

  Var<T> bind(Parameter<T>& p);
  Var<T> constant(Tensor<T> value) { return graph_.input(std::move(value)); }

  const std::vector<Binding>& bindings() const noexcept { return bindings_; }

 private:
  Graph<T>& graph_;
  bool track_;
  bool frozen_[2] = {false, false};
  std::unordered_map<const Parameter<T>*, NodeId> bound_;
  std::vector<Binding> bindings_;
};

extern template class ForwardContext<float>;
extern template class ForwardContext<double>;

}  // namespace segsr
