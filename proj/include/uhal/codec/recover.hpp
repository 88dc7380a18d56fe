#pragma once

#include <cstdint>
#include <span>

#include "uhal/codec/container.hpp"

namespace uhal::codec {

// Rebuilds the model stored in a container. Containers without encoder
// weights take them from `encoder_source`, whose arch must match.
models::RecoveryModel<float> model_from_container(const MetadataContainer& c,
                                                  const models::RecoveryModel<float>* encoder_source = nullptr);

// y - head(features), clamped to [0, 1] unless clamp is off.
core::Tensor<float> recover(const core::Tensor<float>& y, const MetadataContainer& c,
                            const models::RecoveryModel<float>* encoder_source = nullptr, bool clamp = true);
core::Tensor<float> recover(const core::Tensor<float>& y, std::span<const std::uint8_t> container_bytes,
                            const models::RecoveryModel<float>* encoder_source = nullptr, bool clamp = true);

}  // namespace uhal::codec
