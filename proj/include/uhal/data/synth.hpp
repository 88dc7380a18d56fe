#pragma once

#include <cstdint>
#include <string>

#include "uhal/core/tensor.hpp"

namespace uhal::data {

enum class SynthMode { DetailInject, GlyphSwap, LowlightEnhance };

std::string to_string(SynthMode m);
SynthMode parse_synth_mode(const std::string& s);

// Surrogate hallucination applied to an authentic image. These stand in for
// generative ISP stages and make no claim of equivalence to them.
struct SynthHallucinationParams {
  SynthMode mode = SynthMode::DetailInject;
  float strength = 0.5f;  // [0, 1]; 0 returns x unchanged
  std::uint64_t seed = 0;
};

// Noise amplitude of detail_inject per unit strength, calibrated so that
// strength 0.5 lands between 18 and 35 dB on the procedural corpus.
inline constexpr float kDetailScale = 0.5f;

core::Tensor<float> synth_hallucinate(const core::Tensor<float>& x, const SynthHallucinationParams& p);

// Piecewise-smooth test scene (gradients, shapes, stripes) in [0.05, 0.95].
core::Tensor<float> procedural_image(std::size_t height, std::size_t width, std::uint64_t seed);

}  // namespace uhal::data
