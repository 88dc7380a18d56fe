#include "uhal/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "uhal/core/error.hpp"
#include "uhal/core/rng.hpp"

namespace uhal::data {

std::string to_string(SynthMode m) {
  switch (m) {
    case SynthMode::DetailInject: return "detail_inject";
    case SynthMode::GlyphSwap: return "glyph_swap";
    case SynthMode::LowlightEnhance: return "lowlight_enhance";
  }
  return "detail_inject";
}

SynthMode parse_synth_mode(const std::string& s) {
  if (s == "detail_inject") return SynthMode::DetailInject;
  if (s == "glyph_swap") return SynthMode::GlyphSwap;
  if (s == "lowlight_enhance") return SynthMode::LowlightEnhance;
  throw DataError("unknown synth mode '" + s + "'");
}

namespace {

using Plane = std::vector<float>;

// Separable box blur with edge clamping.
Plane box_blur(const Plane& in, std::size_t h, std::size_t w, int radius) {
  Plane tmp(in.size()), out(in.size());
  const float norm = 1.0f / static_cast<float>(2 * radius + 1);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      float s = 0;
      for (int d = -radius; d <= radius; ++d) {
        const auto cc = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(c) + d, 0, static_cast<long>(w) - 1));
        s += in[r * w + cc];
      }
      tmp[r * w + c] = s * norm;
    }
  }
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      float s = 0;
      for (int d = -radius; d <= radius; ++d) {
        const auto rr = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(r) + d, 0, static_cast<long>(h) - 1));
        s += tmp[rr * w + c];
      }
      out[r * w + c] = s * norm;
    }
  }
  return out;
}

// Difference of blurs of white noise, rescaled to unit RMS.
Plane band_noise(std::size_t h, std::size_t w, const core::CounterRng& rng) {
  Plane white(h * w);
  for (std::size_t i = 0; i < white.size(); ++i) white[i] = static_cast<float>(rng.normal(i));
  const Plane fine = box_blur(white, h, w, 1);
  const Plane coarse = box_blur(box_blur(white, h, w, 3), h, w, 3);
  Plane out(h * w);
  double ss = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = fine[i] - coarse[i];
    ss += static_cast<double>(out[i]) * out[i];
  }
  const float inv = ss > 0 ? static_cast<float>(1.0 / std::sqrt(ss / static_cast<double>(out.size()))) : 0.0f;
  for (auto& v : out) v *= inv;
  return out;
}

// Edge weight in [0, 1): g / (g + 0.05) of the luma gradient magnitude.
// Exactly zero on flat regions.
Plane edge_weight(const core::Tensor<float>& x) {
  const std::size_t h = x.dim(0), w = x.dim(1), ch = x.dim(2);
  Plane luma(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    float s = 0;
    for (std::size_t c = 0; c < ch; ++c) s += x[i * ch + c];
    luma[i] = s / static_cast<float>(ch);
  }
  Plane out(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const float gx = luma[r * w + std::min(c + 1, w - 1)] - luma[r * w + (c ? c - 1 : 0)];
      const float gy = luma[std::min(r + 1, h - 1) * w + c] - luma[(r ? r - 1 : 0) * w + c];
      const float g = std::sqrt(gx * gx + gy * gy);
      out[r * w + c] = g / (g + 0.05f);
    }
  }
  // Spread the weight a little so texture sits around edges, not only on them.
  return box_blur(out, h, w, 1);
}

void add_detail(core::Tensor<float>& y, const core::Tensor<float>& x, float amplitude, const core::CounterRng& rng) {
  const std::size_t h = x.dim(0), w = x.dim(1), ch = x.dim(2);
  const Plane weight = edge_weight(x);
  for (std::size_t c = 0; c < ch; ++c) {
    // Mostly shared structure across channels with a small chroma part.
    const Plane shared = band_noise(h, w, rng.split(100));
    const Plane own = band_noise(h, w, rng.split(200 + c));
    for (std::size_t i = 0; i < h * w; ++i) {
      const float n = 0.8f * shared[i] + 0.2f * own[i];
      y[i * ch + c] += amplitude * weight[i] * n;
    }
  }
}

}  // namespace

core::Tensor<float> synth_hallucinate(const core::Tensor<float>& x, const SynthHallucinationParams& p) {
  if (x.rank() != 3) throw ShapeError("synth_hallucinate: expected H x W x C image, got " + core::shape_str(x.shape()));
  if (!(p.strength >= 0.0f && p.strength <= 1.0f)) throw DataError("synth_hallucinate: strength must be in [0, 1]");
  if (p.strength == 0.0f) return x;
  const std::size_t h = x.dim(0), w = x.dim(1), ch = x.dim(2);
  const core::CounterRng rng(p.seed);
  core::Tensor<float> y = x;

  switch (p.mode) {
    case SynthMode::DetailInject:
      add_detail(y, x, kDetailScale * p.strength, rng.split(1));
      break;
    case SynthMode::LowlightEnhance: {
      const float gain = 1.0f + 4.0f * p.strength;
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * gain;
      add_detail(y, x, 0.25f * kDetailScale * p.strength, rng.split(2));
      break;
    }
    case SynthMode::GlyphSwap: {
      const core::CounterRng r = rng.split(3);
      const std::size_t side_h = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(p.strength * h / 2.0)));
      const std::size_t side_w = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(p.strength * w / 2.0)));
      const std::size_t rh = std::min(side_h, h - 1), rw = std::min(side_w, w - 1);
      const std::size_t top = r.below(0, h - rh + 1), left = r.below(1, w - rw + 1);
      // Source patch shifted by at least a quarter of the rectangle.
      const long min_shift_h = static_cast<long>(std::max<std::size_t>(1, rh / 4));
      const long min_shift_w = static_cast<long>(std::max<std::size_t>(1, rw / 4));
      const long dy = (r.below(2, 2) ? 1 : -1) * (min_shift_h + static_cast<long>(r.below(3, rh / 2 + 1)));
      const long dx = (r.below(4, 2) ? 1 : -1) * (min_shift_w + static_cast<long>(r.below(5, rw / 2 + 1)));
      for (std::size_t i = 0; i < rh; ++i) {
        for (std::size_t j = 0; j < rw; ++j) {
          const auto sr = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(top + i) + dy, 0, static_cast<long>(h) - 1));
          const auto sc = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(left + j) + dx, 0, static_cast<long>(w) - 1));
          for (std::size_t c = 0; c < ch; ++c) y.at(top + i, left + j, c) = x.at(sr, sc, c);
        }
      }
      break;
    }
  }
  for (auto& v : y.storage()) v = std::clamp(v, 0.0f, 1.0f);
  return y;
}

core::Tensor<float> procedural_image(std::size_t height, std::size_t width, std::uint64_t seed) {
  if (height == 0 || width == 0) throw ShapeError("procedural_image: empty size");
  const core::CounterRng rng(seed);
  std::uint64_t k = 0;
  auto u = [&] { return static_cast<float>(rng.uniform(k++)); };
  core::Tensor<float> img({height, width, 3});

  // Smooth two-colour gradient background.
  float c0[3], c1[3];
  for (auto& v : c0) v = 0.15f + 0.7f * u();
  for (auto& v : c1) v = 0.15f + 0.7f * u();
  const float angle = 2.0f * std::numbers::pi_v<float> * u();
  const float ca = std::cos(angle), sa = std::sin(angle);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const float fx = (c + 0.5f) / width - 0.5f, fy = (r + 0.5f) / height - 0.5f;
      const float t = std::clamp(0.5f + ca * fx + sa * fy, 0.0f, 1.0f);
      for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = c0[ch] * (1 - t) + c1[ch] * t;
    }
  }

  const int shapes = 3 + static_cast<int>(rng.below(k++, 4));
  for (int s = 0; s < shapes; ++s) {
    float col[3];
    for (auto& v : col) v = 0.05f + 0.9f * u();
    const int kind = static_cast<int>(rng.below(k++, 3));
    const float cx = u() * width, cy = u() * height;
    const float rx = (0.08f + 0.25f * u()) * width, ry = (0.08f + 0.25f * u()) * height;
    const float period = 2.0f + 6.0f * u();
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t c = 0; c < width; ++c) {
        const float dx = (c + 0.5f - cx) / rx, dy = (r + 0.5f - cy) / ry;
        bool inside = false;
        float shade = 1.0f;
        if (kind == 0) {
          inside = std::abs(dx) <= 1 && std::abs(dy) <= 1;
        } else if (kind == 1) {
          inside = dx * dx + dy * dy <= 1;
          shade = 0.85f + 0.15f * (1 - (dx * dx + dy * dy));
        } else {
          inside = std::abs(dx) <= 1 && std::abs(dy) <= 1 &&
                   std::fmod(static_cast<float>(c + r), 2 * period) < period;
        }
        if (!inside) continue;
        for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = col[ch] * shade;
      }
    }
  }
  for (auto& v : img.storage()) v = std::clamp(v, 0.05f, 0.95f);
  return img;
}

}  // namespace uhal::data
