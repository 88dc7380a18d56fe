#include "uhal/core/graph.hpp"

#include <vector>

#include "uhal/core/error.hpp"
#include "uhal/simd/kernels.hpp"

namespace uhal::core {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Constant: return "constant";
    case OpKind::Parameter: return "parameter";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::DepthwiseConv2d: return "depthwise_conv2d";
    case OpKind::Linear: return "linear";
    case OpKind::Relu: return "relu";
    case OpKind::Sine: return "sine";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::SimpleGate: return "simple_gate";
    case OpKind::LayerNorm: return "layer_norm";
    case OpKind::ChannelNorm: return "channel_norm";
    case OpKind::GlobalAvgPool: return "global_avg_pool";
    case OpKind::ChannelScale: return "channel_scale";
    case OpKind::PixelShuffle: return "pixel_shuffle";
    case OpKind::Concat: return "concat";
    case OpKind::PadSpatial: return "pad_spatial";
    case OpKind::CropSpatial: return "crop_spatial";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::Reshape: return "reshape";
    case OpKind::MseLoss: return "mse_loss";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::HashGridEncode: return "hashgrid_encode";
  }
  return "unknown";
}

template <typename T>
NodeId Graph<T>::constant(Tensor<T> value) {
  Node n{OpKind::Constant, {}, std::move(value), nullptr, false, {}, {}};
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

template <typename T>
NodeId Graph<T>::parameter(Parameter<T>& param) {
  Node n{OpKind::Parameter, {}, {}, &param, param.trainable, {}, {}};
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

template <typename T>
NodeId Graph<T>::frozen(const Parameter<T>& param) {
  // requires_grad stays false, so backward never writes through this pointer.
  Node n{OpKind::Parameter, {}, {}, const_cast<Parameter<T>*>(&param), false, {}, {}};
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

template <typename T>
NodeId Graph<T>::record(OpKind kind, std::vector<NodeId> inputs, Tensor<T> value, BackwardFn backward) {
  bool needs = false;
  for (NodeId in : inputs) {
    if (in >= nodes_.size()) throw ShapeError(std::string(op_name(kind)) + ": input node does not exist");
    needs = needs || nodes_[in].requires_grad;
  }
  Node n{kind, std::move(inputs), std::move(value), nullptr, needs, {}, needs ? std::move(backward) : BackwardFn{}};
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

template <typename T>
const Tensor<T>& Graph<T>::value(NodeId id) const {
  const Node& n = nodes_.at(id);
  return n.param ? n.param->value : n.value;
}

template <typename T>
void Graph<T>::release(NodeId id) {
  Node& n = nodes_.at(id);
  if (n.requires_grad) throw std::logic_error("release: node takes part in backward");
  if (!n.param) n.value = Tensor<T>();
}

template <typename T>
Tensor<T>& Graph<T>::grad_buffer(NodeId id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad = Tensor<T>(value(id).shape());
  return n.grad;
}

template <typename T>
void Graph<T>::backward(NodeId loss) {
  if (backward_done_) {
    throw std::logic_error("backward already ran on this graph; call reset_gradients() first");
  }
  if (value(loss).size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(value(loss).shape()));
  }
  backward_done_ = true;
  visits_ = 0;
  grad_buffer(loss)[0] = T(1);
  for (NodeId id = loss + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    ++visits_;
    if (n.backward) {
      n.backward(*this, id);
    } else if (n.param) {
      Parameter<T>& p = *n.param;
      if (p.grad.empty()) {
        p.grad = n.grad;
      } else {
        simd::kernels<T>().axpy(p.grad.size(), T(1), n.grad.ptr(), p.grad.ptr());
      }
    }
  }
  // Trainable leaves off every path to the loss still get a (zero) buffer.
  for (Node& n : nodes_) {
    if (n.param && n.requires_grad && n.param->grad.empty()) n.param->grad = Tensor<T>(n.param->value.shape());
  }
}

template <typename T>
void Graph<T>::reset_gradients() {
  for (auto& n : nodes_) n.grad = Tensor<T>();
  backward_done_ = false;
  visits_ = 0;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace uhal::core
