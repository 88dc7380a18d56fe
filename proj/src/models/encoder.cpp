#include "uhal/models/encoder.hpp"

#include <cmath>

#include "uhal/core/error.hpp"
#include "uhal/core/ops.hpp"
#include "uhal/models/init.hpp"

namespace uhal::models {

namespace ops = core::ops;
using core::NodeId;

// Walks params_ in construction order while building the forward graph.
template <typename T>
struct Encoder<T>::Ctx {
  core::Graph<T>& g;
  const std::vector<core::Parameter<T>>& params;
  bool train;
  std::size_t next = 0;

  NodeId take() {
    auto& p = const_cast<core::Parameter<T>&>(params.at(next++));
    return train ? g.parameter(p) : g.frozen(p);
  }
  NodeId conv(NodeId x, std::size_t stride = 1, std::size_t padding = 0, bool bias = true) {
    const NodeId w = take();
    std::optional<NodeId> b;
    if (bias) b = take();
    return ops::conv2d(g, x, w, b, {stride, padding});
  }
};

template <typename T>
Encoder<T>::Encoder(EncoderKind kind, std::size_t width, std::size_t blocks, std::size_t k, core::RngStream& rng)
    : kind_(kind), width_(width), blocks_(blocks), k_(k) {
  if (width == 0 || blocks == 0 || k == 0) throw ShapeError("encoder: width, blocks and k must be positive");
  const std::size_t w = width;
  if (kind == EncoderKind::Naf) {
    params_.reserve(4 + 22 * 3 * blocks + 3);
    conv("intro", 3, 3, w, true, rng);
    for (std::size_t b = 0; b < blocks; ++b) naf_block("enc" + std::to_string(b), w, rng);
    conv("down", 2, w, 2 * w, true, rng);
    for (std::size_t b = 0; b < blocks; ++b) naf_block("mid" + std::to_string(b), 2 * w, rng);
    conv("up", 1, 2 * w, 4 * w, false, rng);
    for (std::size_t b = 0; b < blocks; ++b) naf_block("dec" + std::to_string(b), w, rng);
    conv("ending", 3, w, k, true, rng);
  } else {
    params_.reserve(10);
    conv("conv0", 3, 3, w, true, rng);
    add("norm0.gamma", core::Tensor<T>({w}, T(1)));
    add("norm0.beta", core::Tensor<T>({w}));
    conv("conv1", 3, w, w, true, rng);
    add("norm1.gamma", core::Tensor<T>({w}, T(1)));
    add("norm1.beta", core::Tensor<T>({w}));
    conv("conv2", 3, w, k, true, rng);
  }
}

template <typename T>
std::size_t Encoder<T>::add(const std::string& name, core::Tensor<T> value) {
  params_.push_back(make_param<T>("encoder." + name, std::move(value)));
  return params_.size() - 1;
}

template <typename T>
std::size_t Encoder<T>::conv(const std::string& name, std::size_t kh, std::size_t cin, std::size_t cout, bool bias,
                             core::RngStream& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(kh * kh * cin));
  const std::size_t first = add(name + ".weight", uniform_tensor<T>({kh, kh, cin, cout}, bound, rng));
  if (bias) add(name + ".bias", uniform_tensor<T>({cout}, bound, rng));
  return first;
}

template <typename T>
void Encoder<T>::naf_block(const std::string& name, std::size_t c, core::RngStream& rng) {
  add(name + ".norm1.gamma", core::Tensor<T>({c}, T(1)));
  add(name + ".norm1.beta", core::Tensor<T>({c}));
  conv(name + ".conv1", 1, c, 2 * c, true, rng);
  const double dw_bound = 1.0 / 3.0;  // fan_in of a 3x3 depthwise kernel is 9
  add(name + ".conv2.weight", uniform_tensor<T>({3, 3, 2 * c}, dw_bound, rng));
  add(name + ".conv2.bias", uniform_tensor<T>({2 * c}, dw_bound, rng));
  conv(name + ".sca", 1, c, c, true, rng);
  conv(name + ".conv3", 1, c, c, true, rng);
  add(name + ".beta", core::Tensor<T>({c}));
  add(name + ".norm2.gamma", core::Tensor<T>({c}, T(1)));
  add(name + ".norm2.beta", core::Tensor<T>({c}));
  conv(name + ".conv4", 1, c, 2 * c, true, rng);
  conv(name + ".conv5", 1, c, c, true, rng);
  add(name + ".gamma", core::Tensor<T>({c}));
}

template <typename T>
NodeId Encoder<T>::run_naf(Ctx& ctx, NodeId inp, std::size_t) const {
  auto& g = ctx.g;
  const NodeId n1g = ctx.take(), n1b = ctx.take();
  NodeId x = ops::layer_norm(g, inp, n1g, n1b);
  x = ctx.conv(x);
  const NodeId dw = ctx.take(), dwb = ctx.take();
  x = ops::depthwise_conv2d(g, x, dw, std::optional<NodeId>(dwb), 1);
  x = ops::simple_gate(g, x);
  const NodeId att = ctx.conv(ops::global_avg_pool(g, x));
  x = ops::channel_scale(g, x, att);
  x = ctx.conv(x);
  const NodeId y = ops::add(g, inp, ops::channel_scale(g, x, ctx.take()));

  const NodeId n2g = ctx.take(), n2b = ctx.take();
  x = ops::layer_norm(g, y, n2g, n2b);
  x = ctx.conv(x);
  x = ops::simple_gate(g, x);
  x = ctx.conv(x);
  return ops::add(g, y, ops::channel_scale(g, x, ctx.take()));
}

template <typename T>
NodeId Encoder<T>::run(core::Graph<T>& g, NodeId y, bool train) const {
  const auto& s = g.shape(y);
  if (s.size() != 3 || s[2] != 3) throw ShapeError("encoder: expected H x W x 3 input, got " + core::shape_str(s));
  const std::size_t h = s[0], w = s[1];
  if (h < kMinEncoderSize || w < kMinEncoderSize) {
    throw ShapeError("encoder: input " + core::shape_str(s) + " is smaller than the minimum " +
                     std::to_string(kMinEncoderSize) + " x " + std::to_string(kMinEncoderSize));
  }
  Ctx ctx{g, params_, train};
  if (kind_ == EncoderKind::Base) {
    NodeId x = y;
    for (int layer = 0; layer < 2; ++layer) {
      x = ctx.conv(x, 1, 1);
      const NodeId gm = ctx.take(), bt = ctx.take();
      x = ops::relu(g, ops::channel_norm(g, x, gm, bt));
    }
    return ctx.conv(x, 1, 1);
  }

  const std::size_t pad_h = h % 2, pad_w = w % 2;
  NodeId x = (pad_h || pad_w) ? ops::pad_spatial(g, y, pad_h, pad_w) : y;
  x = ctx.conv(x, 1, 1);
  for (std::size_t b = 0; b < blocks_; ++b) x = run_naf(ctx, x, width_);
  const NodeId skip = x;
  x = ctx.conv(x, 2, 0);
  for (std::size_t b = 0; b < blocks_; ++b) x = run_naf(ctx, x, 2 * width_);
  x = ctx.conv(x, 1, 0, false);
  x = ops::pixel_shuffle(g, x, 2);
  x = ops::add(g, x, skip);
  for (std::size_t b = 0; b < blocks_; ++b) x = run_naf(ctx, x, width_);
  x = ctx.conv(x, 1, 1);
  if (pad_h || pad_w) x = ops::crop_spatial(g, x, h, w);
  return x;
}

template <typename T>
NodeId Encoder<T>::forward(core::Graph<T>& g, NodeId y, bool train) {
  return run(g, y, train);
}

template <typename T>
NodeId Encoder<T>::forward(core::Graph<T>& g, NodeId y) const {
  return run(g, y, false);
}

template <typename T>
std::vector<core::Parameter<T>*> Encoder<T>::parameters() {
  std::vector<core::Parameter<T>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
std::vector<const core::Parameter<T>*> Encoder<T>::parameters() const {
  std::vector<const core::Parameter<T>*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
std::size_t Encoder<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template class Encoder<float>;
template class Encoder<double>;

}  // namespace uhal::models
