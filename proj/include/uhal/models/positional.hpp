#pragma once

#include "uhal/core/tensor.hpp"

namespace uhal::models {

// Frequency encoding of every input column c into
// [sin(2^0 pi c), cos(2^0 pi c), ..., sin(2^(n-1) pi c), cos(2^(n-1) pi c)].
// in: N x D, returns N x (2 n D). Throws for n < 1.
template <typename T>
core::Tensor<T> positional_encode(const core::Tensor<T>& in, std::size_t frequencies);

}  // namespace uhal::models
