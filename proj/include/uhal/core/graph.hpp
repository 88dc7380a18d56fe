#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "uhal/core/tensor.hpp"

namespace uhal::core {

enum class OpKind {
  Constant,
  Parameter,
  Conv2d,
  DepthwiseConv2d,
  Linear,
  Relu,
  Sine,
  Add,
  Sub,
  Mul,
  Scale,
  SimpleGate,
  LayerNorm,
  ChannelNorm,
  GlobalAvgPool,
  ChannelScale,
  PixelShuffle,
  Concat,
  PadSpatial,
  CropSpatial,
  GatherRows,
  Reshape,
  MseLoss,
  Sum,
  Mean,
  HashGridEncode,
};

const char* op_name(OpKind kind);

// Trainable tensor owned by a model. grad stays empty until a backward pass
// reaches the parameter; optimizers treat an empty grad as an error.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  void zero_grad() { grad = Tensor<T>(); }
};

using NodeId = std::size_t;

// Tape of forward ops. Nodes are appended in execution order, which is also a
// topological order; backward() walks it once in reverse.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, NodeId)>;

  NodeId constant(Tensor<T> value);
  NodeId parameter(Parameter<T>& param);
  // Read-only leaf for inference or frozen stages; never receives gradients.
  NodeId frozen(const Parameter<T>& param);

  // Appends an op node. The backward closure is dropped when no input
  // requires a gradient.
  NodeId record(OpKind kind, std::vector<NodeId> inputs, Tensor<T> value, BackwardFn backward);

  const Tensor<T>& value(NodeId id) const;
  // Frees the stored value of a node that no gradient flows through. Only
  // for inference graphs whose later ops no longer read it.
  void release(NodeId id);
  const Shape& shape(NodeId id) const { return value(id).shape(); }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // d(loss)/d(node). Empty if backward never reached the node.
  const Tensor<T>& grad(NodeId id) const { return nodes_.at(id).grad; }
  // Accumulation buffer used by backward closures; zero-filled on first use.
  Tensor<T>& grad_buffer(NodeId id);

  // Scalar loss only. A second call without reset_gradients() throws.
  // Every trainable parameter leaf ends with a grad buffer, zero when the
  // loss does not depend on it.
  void backward(NodeId loss);
  void reset_gradients();
  bool backward_done() const { return backward_done_; }
  // Nodes whose backward step ran during the last backward().
  std::size_t backward_visits() const { return visits_; }

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    Tensor<T> value;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    Tensor<T> grad;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  std::size_t visits_ = 0;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace uhal::core
