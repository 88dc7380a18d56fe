#include "uhal/models/init.hpp"

#include <cmath>

namespace uhal::models {

template <typename T>
core::Tensor<T> uniform_tensor(core::Shape shape, double bound, core::RngStream& rng) {
  core::Tensor<T> t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
void default_init(core::Parameter<T>& weight, core::Parameter<T>* bias, std::size_t fan_in, core::RngStream& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  weight.value = uniform_tensor<T>(weight.value.shape(), bound, rng);
  if (bias) bias->value = uniform_tensor<T>(bias->value.shape(), bound, rng);
}

double siren_bound(bool first_layer, std::size_t fan_in, double omega0) {
  const double n = static_cast<double>(fan_in);
  return first_layer ? 1.0 / n : std::sqrt(6.0 / n) / omega0;
}

template core::Tensor<float> uniform_tensor<float>(core::Shape, double, core::RngStream&);
template core::Tensor<double> uniform_tensor<double>(core::Shape, double, core::RngStream&);
template void default_init<float>(core::Parameter<float>&, core::Parameter<float>*, std::size_t, core::RngStream&);
template void default_init<double>(core::Parameter<double>&, core::Parameter<double>*, std::size_t,
                                   core::RngStream&);

}  // namespace uhal::models
