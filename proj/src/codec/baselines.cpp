#include "uhal/codec/baselines.hpp"

#include <cmath>
#include <cstring>

#include "uhal/core/bytes.hpp"
#include "uhal/core/error.hpp"
#include "uhal/data/image_io.hpp"
#include "uhal/train/metrics.hpp"

namespace uhal::codec {

namespace {

constexpr char kResidualMagic[4] = {'U', 'H', 'R', 'J'};
constexpr std::uint8_t kResidualVersion = 1;
constexpr float kLo = -1.0f, kHi = 1.0f;

void check_pair(const core::Tensor<float>& x, const core::Tensor<float>& y, const char* what) {
  if (x.shape() != y.shape() || x.rank() != 3) {
    throw ShapeError(std::string(what) + ": shapes differ or are not H x W x C: " + core::shape_str(x.shape()) +
                     " vs " + core::shape_str(y.shape()));
  }
}

}  // namespace

ResidualJpegResult residual_jpeg_baseline(const core::Tensor<float>& x, const core::Tensor<float>& y, int quality) {
  check_pair(x, y, "residual_jpeg_baseline");
  core::Tensor<float> mapped(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    // (r - lo) / (hi - lo) lands on [0, 1]; to_u8 rounds it to 0..255.
    mapped[i] = ((x[i] - y[i]) - kLo) / (kHi - kLo);
  }
  core::ByteWriter w;
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(kResidualMagic), 4));
  w.u8(kResidualVersion);
  w.f32(kLo);
  w.f32(kHi);
  w.bytes(data::encode_jpeg(mapped, quality));

  ResidualJpegResult res;
  res.metadata = w.take();
  res.recovered = residual_jpeg_recover(y, res.metadata);
  res.psnr = train::psnr(res.recovered, x);
  return res;
}

core::Tensor<float> residual_jpeg_recover(const core::Tensor<float>& y, std::span<const std::uint8_t> metadata) {
  core::ByteReader r(metadata);
  const auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), kResidualMagic, 4) != 0) {
    throw MetadataError(MetadataError::Kind::BadMagic, "residual metadata has the wrong magic");
  }
  if (r.u8() != kResidualVersion) throw MetadataError(MetadataError::Kind::UnsupportedVersion, "residual metadata version");
  const float lo = r.f32(), hi = r.f32();
  const core::Tensor<float> q = data::decode_jpeg(r.bytes(r.remaining()));
  if (q.shape() != y.shape()) {
    throw ShapeError("residual metadata is " + core::shape_str(q.shape()) + " but y is " + core::shape_str(y.shape()));
  }
  core::Tensor<float> out(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] + (q[i] * (hi - lo) + lo);
  return train::clamp01(std::move(out));
}

MaskMetadata mask_metadata(const core::Tensor<float>& x, const core::Tensor<float>& y, float threshold) {
  check_pair(x, y, "mask_metadata");
  if (!(threshold > 0.0f)) throw ShapeError("mask_metadata: threshold must be positive");
  MaskMetadata m;
  m.height = x.dim(0);
  m.width = x.dim(1);
  m.threshold = threshold;
  const std::size_t c = x.dim(2), n = m.height * m.width;
  m.mask.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += std::abs(static_cast<double>(x[i * c + k]) - y[i * c + k]);
    m.mask[i] = s / static_cast<double>(c) > threshold ? 1 : 0;
  }
  core::ByteWriter w;
  w.u32(static_cast<std::uint32_t>(m.height));
  w.u32(static_cast<std::uint32_t>(m.width));
  w.f32(threshold);
  std::vector<std::uint8_t> bits((n + 7) / 8, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (m.mask[i]) bits[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
  }
  w.bytes(bits);
  m.packed = w.take();
  return m;
}

MaskMetadata unpack_mask(std::span<const std::uint8_t> packed) {
  core::ByteReader r(packed);
  MaskMetadata m;
  m.height = r.u32();
  m.width = r.u32();
  m.threshold = r.f32();
  const std::size_t n = m.height * m.width;
  const auto bits = r.bytes((n + 7) / 8);
  m.mask.resize(n);
  for (std::size_t i = 0; i < n; ++i) m.mask[i] = (bits[i / 8] >> (7 - i % 8)) & 1u;
  m.packed.assign(packed.begin(), packed.end());
  return m;
}

}  // namespace uhal::codec
