#pragma once

#include "uhal/core/graph.hpp"
#include "uhal/core/rng.hpp"

namespace uhal::models {

// Uniform fill in [-bound, bound].
template <typename T>
core::Tensor<T> uniform_tensor(core::Shape shape, double bound, core::RngStream& rng);

// U(+-1/sqrt(fan_in)) for weight and bias, the usual default for linear and
// conv layers.
template <typename T>
void default_init(core::Parameter<T>& weight, core::Parameter<T>* bias, std::size_t fan_in, core::RngStream& rng);

// Sine-network init: first layer U(+-1/fan_in), later layers
// U(+-sqrt(6/fan_in)/omega0). Biases use the same bound.
double siren_bound(bool first_layer, std::size_t fan_in, double omega0);

template <typename T>
core::Parameter<T> make_param(std::string name, core::Tensor<T> value) {
  core::Parameter<T> p;
  p.name = std::move(name);
  p.value = std::move(value);
  return p;
}

}  // namespace uhal::models
