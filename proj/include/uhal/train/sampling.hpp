#pragma once

#include <cstdint>
#include <vector>

#include "uhal/core/tensor.hpp"

namespace uhal::train {

// Index of the batch used at a given iteration when a new batch is drawn
// every p iterations.
inline std::uint64_t batch_key(std::uint64_t iteration, std::uint64_t every_p) { return iteration / every_p; }

// n flat pixel indices (row * W + col), uniform with replacement. A pure
// function of (seed, iteration / every_p).
std::vector<std::uint32_t> sample_pixels(std::size_t height, std::size_t width, std::size_t n, std::uint64_t seed,
                                         std::uint64_t iteration, std::uint64_t every_p);

// Draws pixels with probability proportional to per-pixel weights. An
// all-zero weight map degrades to uniform sampling.
class PixelSampler {
 public:
  static PixelSampler uniform(std::size_t pixels);
  static PixelSampler weighted(const std::vector<double>& weights);

  std::vector<std::uint32_t> draw(std::size_t n, std::uint64_t seed, std::uint64_t iteration,
                                  std::uint64_t every_p) const;
  bool is_uniform() const { return cdf_.empty(); }
  std::size_t pixels() const { return pixels_; }

 private:
  std::size_t pixels_ = 0;
  std::vector<double> cdf_;  // empty for uniform
};

// Per-pixel mean |x - y| over channels, plus epsilon.
std::vector<double> error_weights(const core::Tensor<float>& x, const core::Tensor<float>& y, double epsilon);

std::vector<std::uint32_t> error_weighted_sample(const core::Tensor<float>& x, const core::Tensor<float>& y,
                                                 std::size_t n, std::uint64_t seed, double epsilon = 1e-4);

}  // namespace uhal::train
