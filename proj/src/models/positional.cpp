#include "uhal/models/positional.hpp"

#include <cmath>
#include <numbers>

#include "uhal/core/error.hpp"

namespace uhal::models {

template <typename T>
core::Tensor<T> positional_encode(const core::Tensor<T>& in, std::size_t frequencies) {
  if (frequencies < 1) throw ShapeError("positional_encode: need at least one frequency");
  if (in.rank() < 1) throw ShapeError("positional_encode: input must have rank >= 1");
  const std::size_t d = in.shape().back();
  const std::size_t rows = in.size() / d;
  core::Shape shape = in.shape();
  shape.back() = 2 * frequencies * d;
  core::Tensor<T> out(shape);
  T* o = out.ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      const double c = static_cast<double>(in[r * d + j]);
      for (std::size_t f = 0; f < frequencies; ++f) {
        const double a = std::ldexp(std::numbers::pi, static_cast<int>(f)) * c;
        *o++ = static_cast<T>(std::sin(a));
        *o++ = static_cast<T>(std::cos(a));
      }
    }
  }
  return out;
}

template core::Tensor<float> positional_encode<float>(const core::Tensor<float>&, std::size_t);
template core::Tensor<double> positional_encode<double>(const core::Tensor<double>&, std::size_t);

}  // namespace uhal::models
