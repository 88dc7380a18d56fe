#include "uhal/train/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "uhal/core/error.hpp"
#include "uhal/core/rng.hpp"

namespace uhal::train {

namespace {

// Stream keys: distinct purposes never share draws.
constexpr std::uint64_t kUniformStream = 0x5a4d504c;
constexpr std::uint64_t kWeightedStream = 0x5745494748;

void check_request(std::size_t pixels, std::size_t n, std::uint64_t every_p) {
  if (n == 0) throw ShapeError("pixel sampling: batch size must be positive");
  if (pixels == 0) throw ShapeError("pixel sampling: image has no pixels");
  if (every_p == 0) throw ShapeError("pixel sampling: every_p must be >= 1");
  if (pixels > 0xffffffffull) throw ShapeError("pixel sampling: image too large for 32-bit indices");
}

}  // namespace

std::vector<std::uint32_t> sample_pixels(std::size_t height, std::size_t width, std::size_t n, std::uint64_t seed,
                                         std::uint64_t iteration, std::uint64_t every_p) {
  return PixelSampler::uniform(height * width).draw(n, seed, iteration, every_p);
}

PixelSampler PixelSampler::uniform(std::size_t pixels) {
  PixelSampler s;
  s.pixels_ = pixels;
  return s;
}

PixelSampler PixelSampler::weighted(const std::vector<double>& weights) {
  PixelSampler s;
  s.pixels_ = weights.size();
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ShapeError("pixel sampling: weights must be finite and >= 0");
    total += w;
  }
  if (total <= 0.0) return s;
  s.cdf_.resize(weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    s.cdf_[i] = acc / total;
  }
  s.cdf_.back() = 1.0;
  return s;
}

std::vector<std::uint32_t> PixelSampler::draw(std::size_t n, std::uint64_t seed, std::uint64_t iteration,
                                              std::uint64_t every_p) const {
  check_request(pixels_, n, every_p);
  const std::uint64_t key = batch_key(iteration, every_p);
  std::vector<std::uint32_t> out(n);
  if (cdf_.empty()) {
    const core::CounterRng rng = core::CounterRng(seed).split(kUniformStream).split(key);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<std::uint32_t>(rng.below(i, pixels_));
    return out;
  }
  const core::CounterRng rng = core::CounterRng(seed).split(kWeightedStream).split(key);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform(i);
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    out[i] = static_cast<std::uint32_t>(std::min<std::size_t>(it - cdf_.begin(), pixels_ - 1));
  }
  return out;
}

std::vector<double> error_weights(const core::Tensor<float>& x, const core::Tensor<float>& y, double epsilon) {
  if (x.shape() != y.shape() || x.rank() != 3) {
    throw ShapeError("error weights: pair shapes differ or are not H x W x C: " + core::shape_str(x.shape()) +
                     " vs " + core::shape_str(y.shape()));
  }
  const std::size_t c = x.dim(2), n = x.dim(0) * x.dim(1);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += std::abs(static_cast<double>(x[i * c + k]) - y[i * c + k]);
    w[i] = s / static_cast<double>(c) + epsilon;
  }
  return w;
}

std::vector<std::uint32_t> error_weighted_sample(const core::Tensor<float>& x, const core::Tensor<float>& y,
                                                 std::size_t n, std::uint64_t seed, double epsilon) {
  return PixelSampler::weighted(error_weights(x, y, epsilon)).draw(n, seed, 0, 1);
}

}  // namespace uhal::train
