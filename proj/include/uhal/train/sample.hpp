#pragma once

#include <string>

#include "uhal/core/tensor.hpp"

namespace uhal::train {

// Authentic image x and hallucinated image y, both H x W x 3 in [0, 1].
struct PairedSample {
  core::Tensor<float> x;
  core::Tensor<float> y;
  std::string id;
  std::string modality;
};

}  // namespace uhal::train
