#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "uhal/core/tensor.hpp"

namespace uhal::data {

// Images are H x W x C float tensors in [0, 1]; 8-bit value v maps to v / 255.
std::uint8_t to_u8(float v);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// PNG (8 or 16 bit, gray/RGB, alpha dropped) decoded to 3 channels.
core::Tensor<float> decode_png(std::span<const std::uint8_t> bytes);
// 8-bit RGB (C == 3) or gray (C == 1) PNG.
std::vector<std::uint8_t> encode_png(const core::Tensor<float>& img);

// Baseline JPEG, C == 1 or 3, quality 1..100.
std::vector<std::uint8_t> encode_jpeg(const core::Tensor<float>& img, int quality);
// Decodes to the stream's own channel count (1 or 3).
core::Tensor<float> decode_jpeg(std::span<const std::uint8_t> bytes);

// Detects PNG or JPEG from the leading bytes; grayscale is expanded to RGB.
core::Tensor<float> read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const core::Tensor<float>& img);

}  // namespace uhal::data
