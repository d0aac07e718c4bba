#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "segsr/tensor.hpp"

namespace segsr {

struct NodeId {
  std::uint32_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

enum class OpKind : std::uint8_t {
  input,
  parameter,
  conv2d,
  bias_add,
  leaky_relu,
  add,
  sub,
  mul,
  scale,
  scale_by,
  shift_by,
  concat_channels,
  upsample_nearest,
  reshape,
  matmul,
  softmax_rows,
  fuse_attention,
  normalize_rows,
  sum,
  mean,
  mean_abs_diff,
  softplus,
};

std::string_view to_string(OpKind kind) noexcept;

template <typename T>
class Graph;

// Lightweight handle to a node. Copyable; only valid while its graph lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* graph, NodeId id) : graph_(graph), id_(id) {}

  Graph<T>& graph() const { return *graph_; }
  NodeId id() const noexcept { return id_; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Graph<T>* graph_ = nullptr;
  NodeId id_{};
};

// Define-by-run reverse-mode graph. Nodes are evaluated eagerly at insertion,
// so insertion order is a topological order. One backward pass per graph.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, NodeId)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Constant leaf. `requires_grad` opts a non-parameter leaf into gradients.
  Var<T> input(Tensor<T> value, bool requires_grad = false);
  Var<T> parameter(Tensor<T> value);

  // Appends an op node. The node requires a gradient iff any input does; in
  // that case `backward` must accumulate into the inputs that require one.
  Var<T> record(OpKind kind, std::initializer_list<NodeId> inputs, Tensor<T> value, BackwardFn backward);
  Var<T> record(OpKind kind, std::vector<NodeId> inputs, Tensor<T> value, BackwardFn backward);

  const Tensor<T>& value(NodeId id) const { return node(id).value; }
  OpKind kind(NodeId id) const { return node(id).kind; }
  std::span<const NodeId> inputs(NodeId id) const { return node(id).inputs; }
  bool is_parameter(NodeId id) const { return node(id).is_parameter; }
  bool requires_grad(NodeId id) const { return node(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  bool has_grad(NodeId id) const { return node(id).has_grad; }
  // Gradient of the loss w.r.t. node `id`; zeros if nothing flowed into it.
  const Tensor<T>& grad(NodeId id) const;
  // Zero-initialised on first access; backward closures add into it.
  Tensor<T>& grad_accumulator(NodeId id);

  void backward(NodeId loss);
  void backward(const Var<T>& loss) { backward(loss.id()); }
  bool backward_done() const noexcept { return backward_done_; }

  // Multiply-accumulate tally of every conv2d / matmul evaluated so far.
  void add_macs(std::uint64_t n) noexcept { macs_ += n; }
  std::uint64_t macs() const noexcept { return macs_; }

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    bool is_parameter = false;
    bool requires_grad = false;
    bool has_grad = false;
  };

  const Node& node(NodeId id) const;
  Node& node(NodeId id);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  std::uint64_t macs_ = 0;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph_->value(id_);
}

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace segsr
