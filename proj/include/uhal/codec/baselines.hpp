#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "uhal/core/tensor.hpp"

namespace uhal::codec {

struct ResidualJpegResult {
  // "UHRJ" | u8 version | f32 lo | f32 hi | JPEG bytes
  std::vector<std::uint8_t> metadata;
  core::Tensor<float> recovered;
  double psnr = 0.0;
};

// Stores r = x - y as a JPEG after mapping [lo, hi] = [-1, 1] onto 0..255.
ResidualJpegResult residual_jpeg_baseline(const core::Tensor<float>& x, const core::Tensor<float>& y, int quality);
// Inverse of the mapping applied to y; clamped to [0, 1].
core::Tensor<float> residual_jpeg_recover(const core::Tensor<float>& y, std::span<const std::uint8_t> metadata);

struct MaskMetadata {
  std::size_t height = 0;
  std::size_t width = 0;
  float threshold = 0.0f;
  std::vector<std::uint8_t> mask;    // one byte per pixel, 0 or 1
  std::vector<std::uint8_t> packed;  // u32 H | u32 W | f32 threshold | bits, MSB first
};

inline constexpr std::size_t kMaskHeaderBytes = 12;

// Flags pixels whose mean |x - y| over channels exceeds threshold (> 0).
MaskMetadata mask_metadata(const core::Tensor<float>& x, const core::Tensor<float>& y, float threshold);
MaskMetadata unpack_mask(std::span<const std::uint8_t> packed);

}  // namespace uhal::codec
