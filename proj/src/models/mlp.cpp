#include "uhal/models/mlp.hpp"

#include "uhal/core/error.hpp"
#include "uhal/core/ops.hpp"
#include "uhal/models/init.hpp"

namespace uhal::models {

template <typename T>
Mlp<T>::Mlp(std::size_t in, std::size_t hidden, std::size_t layers, std::size_t out, Activation act, double omega0,
            core::RngStream& rng, const std::string& prefix)
    : act_(act), omega0_(omega0) {
  if (in == 0 || hidden == 0 || layers == 0 || out == 0) throw ShapeError("mlp: all dimensions must be positive");
  dims_.push_back(in);
  for (std::size_t i = 0; i < layers; ++i) dims_.push_back(hidden);
  dims_.push_back(out);
  params_.reserve(2 * (dims_.size() - 1));
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    const std::size_t din = dims_[l], dout = dims_[l + 1];
    auto w = make_param<T>(prefix + ".weight" + std::to_string(l), core::Tensor<T>({din, dout}));
    auto b = make_param<T>(prefix + ".bias" + std::to_string(l), core::Tensor<T>({dout}));
    if (act == Activation::Sine) {
      const double bound = siren_bound(l == 0, din, omega0);
      w.value = uniform_tensor<T>({din, dout}, bound, rng);
      b.value = uniform_tensor<T>({dout}, bound, rng);
    } else {
      default_init(w, &b, din, rng);
    }
    params_.push_back(std::move(w));
    params_.push_back(std::move(b));
  }
}

template <typename T>
core::NodeId Mlp<T>::run(core::Graph<T>& g, core::NodeId x, bool train) const {
  const auto& xs = g.shape(x);
  if (xs.empty() || xs.back() != input_dim()) {
    throw ShapeError("mlp: expected rows of " + std::to_string(input_dim()) + " features, got " +
                     core::shape_str(xs));
  }
  core::NodeId h = x;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    auto& w = const_cast<core::Parameter<T>&>(params_[2 * l]);
    auto& b = const_cast<core::Parameter<T>&>(params_[2 * l + 1]);
    const core::NodeId wn = train ? g.parameter(w) : g.frozen(w);
    const core::NodeId bn = train ? g.parameter(b) : g.frozen(b);
    h = core::ops::linear(g, h, wn, bn);
    if (l + 1 == layer_count()) break;
    h = act_ == Activation::Relu ? core::ops::relu(g, h) : core::ops::sine(g, h, static_cast<T>(omega0_));
  }
  return h;
}

template <typename T>
core::NodeId Mlp<T>::forward(core::Graph<T>& g, core::NodeId x, bool train) {
  return run(g, x, train);
}

template <typename T>
core::NodeId Mlp<T>::forward(core::Graph<T>& g, core::NodeId x) const {
  return run(g, x, false);
}

template <typename T>
std::vector<core::Parameter<T>*> Mlp<T>::parameters() {
  std::vector<core::Parameter<T>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
std::vector<const core::Parameter<T>*> Mlp<T>::parameters() const {
  std::vector<const core::Parameter<T>*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
void Mlp<T>::zero_output_layer() {
  params_[params_.size() - 2].value.fill(T(0));
  params_[params_.size() - 1].value.fill(T(0));
}

template class Mlp<float>;
template class Mlp<double>;

}  // namespace uhal::models
