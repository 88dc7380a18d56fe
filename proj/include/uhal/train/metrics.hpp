#pragma once

#include <limits>

#include "uhal/core/tensor.hpp"

namespace uhal::train {

// Returned by psnr() for identical inputs.
inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

// Mean squared error over all elements, accumulated in double.
template <typename T>
double mse(const core::Tensor<T>& a, const core::Tensor<T>& b);

// 10 log10(peak^2 / mse) over all pixels and channels jointly.
template <typename T>
double psnr(const core::Tensor<T>& a, const core::Tensor<T>& b, double peak = 1.0);

template <typename T>
core::Tensor<T> clamp01(core::Tensor<T> t);

}  // namespace uhal::train
