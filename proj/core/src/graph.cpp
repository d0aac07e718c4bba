#include "segsr/graph.hpp"

#include <string>

namespace segsr {

std::string_view to_string(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::input: return "input";
    case OpKind::parameter: return "parameter";
    case OpKind::conv2d: return "conv2d";
    case OpKind::bias_add: return "bias_add";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::scale_by: return "scale_by";
    case OpKind::shift_by: return "shift_by";
    case OpKind::concat_channels: return "concat_channels";
    case OpKind::upsample_nearest: return "upsample_nearest";
    case OpKind::reshape: return "reshape";
    case OpKind::matmul: return "matmul";
    case OpKind::softmax_rows: return "softmax_rows";
    case OpKind::fuse_attention: return "fuse_attention";
    case OpKind::normalize_rows: return "normalize_rows";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::mean_abs_diff: return "mean_abs_diff";
    case OpKind::softplus: return "softplus";
  }
  return "unknown";
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(NodeId id) const {
  if (id.index >= nodes_.size()) throw ShapeError("node id " + std::to_string(id.index) + " out of range");
  return nodes_[id.index];
}

template <typename T>
typename Graph<T>::Node& Graph<T>::node(NodeId id) {
  if (id.index >= nodes_.size()) throw ShapeError("node id " + std::to_string(id.index) + " out of range");
  return nodes_[id.index];
}

template <typename T>
Var<T> Graph<T>::input(Tensor<T> value, bool requires_grad) {
  Node n{OpKind::input, {}, std::move(value), Tensor<T>{}, nullptr, false, requires_grad, false};
  nodes_.push_back(std::move(n));
  return Var<T>(this, NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)});
}

template <typename T>
Var<T> Graph<T>::parameter(Tensor<T> value) {
  Node n{OpKind::parameter, {}, std::move(value), Tensor<T>{}, nullptr, true, true, false};
  nodes_.push_back(std::move(n));
  return Var<T>(this, NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)});
}

template <typename T>
Var<T> Graph<T>::record(OpKind kind, std::initializer_list<NodeId> inputs, Tensor<T> value, BackwardFn backward) {
  return record(kind, std::vector<NodeId>(inputs), std::move(value), std::move(backward));
}

template <typename T>
Var<T> Graph<T>::record(OpKind kind, std::vector<NodeId> inputs, Tensor<T> value, BackwardFn backward) {
  if (backward_done_) throw Error("cannot extend a graph after backward()");
  bool needs = false;
  for (NodeId in : inputs) needs = needs || node(in).requires_grad;
  Node n{kind, std::move(inputs), std::move(value), Tensor<T>{}, needs ? std::move(backward) : nullptr, false, needs,
         false};
  nodes_.push_back(std::move(n));
  return Var<T>(this, NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)});
}

template <typename T>
const Tensor<T>& Graph<T>::grad(NodeId id) const {
  const Node& n = node(id);
  if (!n.has_grad) throw Error("node " + std::to_string(id.index) + " has no gradient");
  return n.grad;
}

template <typename T>
Tensor<T>& Graph<T>::grad_accumulator(NodeId id) {
  Node& n = node(id);
  if (!n.has_grad) {
    n.grad = Tensor<T>(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

template <typename T>
void Graph<T>::backward(NodeId loss) {
  if (backward_done_) throw Error("backward() already ran on this graph");
  const Node& l = node(loss);
  if (l.value.size() != 1) throw ShapeError("backward() needs a scalar loss, got shape " + l.value.shape().str());
  backward_done_ = true;
  // Every grad-requiring node gets a (possibly zero) gradient so callers can
  // read it unconditionally.
  for (Node& n : nodes_) {
    if (n.requires_grad && !n.has_grad) {
      n.grad = Tensor<T>(n.value.shape());
      n.has_grad = true;
    }
  }
  if (!l.requires_grad) return;
  grad_accumulator(loss)[0] = T{1};
  for (std::uint32_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward) n.backward(*this, NodeId{i});
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace segsr
