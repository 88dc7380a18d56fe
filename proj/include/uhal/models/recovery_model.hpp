#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "uhal/core/graph.hpp"
#include "uhal/models/arch.hpp"
#include "uhal/models/encoder.hpp"
#include "uhal/models/hashgrid.hpp"
#include "uhal/models/mlp.hpp"

namespace uhal::models {

// Pixel-center coordinates normalized to [0, 1): ((col + 0.5) / W, (row + 0.5) / H).
inline std::array<double, 2> normalized_coord(std::size_t row, std::size_t col, std::size_t height,
                                              std::size_t width) {
  return {(static_cast<double>(col) + 0.5) / static_cast<double>(width),
          (static_cast<double>(row) + 0.5) / static_cast<double>(height)};
}

struct NamedTensor {
  std::string name;
  core::Tensor<float> value;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// Ordered float32 snapshot of a model's weights: encoding tensors first, then
// the head, each in construction order.
struct WeightBundle {
  std::vector<NamedTensor> encoding;
  std::vector<NamedTensor> head;

  std::size_t parameter_count() const;
  friend bool operator==(const WeightBundle&, const WeightBundle&) = default;
};

// Per-image inputs to the head that do not change while the head trains:
// latents from the frozen encoder, coordinates, positional features, RGB.
template <typename T>
struct PixelFeatures {
  std::size_t height = 0;
  std::size_t width = 0;
  core::Tensor<T> y;     // H x W x 3
  core::Tensor<T> rows;  // (H W) x dim, empty when dim == 0
  std::size_t dim = 0;
};

struct PixelIndex {
  std::size_t row;
  std::size_t col;
};

// One complete recovery network: optional encoding stage (conv encoder or
// hash grid) followed by the residual head. x_hat = y - head(features).
template <typename T>
class RecoveryModel {
 public:
  RecoveryModel(const ArchDescriptor& arch, std::uint64_t seed);

  const ArchDescriptor& arch() const { return arch_; }
  Encoder<T>* encoder() { return encoder_ ? &*encoder_ : nullptr; }
  const Encoder<T>* encoder() const { return encoder_ ? &*encoder_ : nullptr; }
  HashGrid<T>* hashgrid() { return grid_ ? &*grid_ : nullptr; }
  const HashGrid<T>* hashgrid() const { return grid_ ? &*grid_ : nullptr; }
  Mlp<T>& head() { return head_; }
  const Mlp<T>& head() const { return head_; }

  std::vector<core::Parameter<T>*> encoding_parameters();
  std::vector<const core::Parameter<T>*> encoding_parameters() const;
  std::vector<core::Parameter<T>*> head_parameters() { return head_.parameters(); }
  std::vector<const core::Parameter<T>*> head_parameters() const { return head_.parameters(); }
  std::vector<core::Parameter<T>*> parameters();

  // Runs the encoder once (frozen) and assembles per-pixel head inputs.
  PixelFeatures<T> prepare(const core::Tensor<T>& y) const;

  // Residual for a list of flat pixel indices (row * W + col): N x 3.
  core::NodeId residual_rows(core::Graph<T>& g, const PixelFeatures<T>& f, const std::vector<std::uint32_t>& pixels,
                             bool train_head, bool train_encoding);
  core::NodeId residual_rows(core::Graph<T>& g, const PixelFeatures<T>& f,
                             const std::vector<std::uint32_t>& pixels) const;

  // Residual over a crop of a larger image, differentiable through the
  // encoder. y_crop: h x w x 3 located at (top, left) in a full_h x full_w
  // image. Returns h x w x 3.
  core::NodeId residual_map(core::Graph<T>& g, core::NodeId y_crop, std::size_t full_h, std::size_t full_w,
                            std::size_t top, std::size_t left, bool train);

  core::Tensor<T> residual_image(const PixelFeatures<T>& f) const;
  // y - residual over the whole image, not clamped.
  core::Tensor<T> recover(const core::Tensor<T>& y) const;
  core::Tensor<T> recover(const PixelFeatures<T>& f) const;
  // x_hat at selected pixels: N x 3. Out-of-bounds pixels throw.
  core::Tensor<T> decode_recover(const PixelFeatures<T>& f, const std::vector<PixelIndex>& pixels) const;

  void zero_output_layer() { head_.zero_output_layer(); }

  WeightBundle export_weights() const;
  // Replaces weights from a bundle. Without encoding tensors in the bundle
  // only the head is replaced. Counts and shapes must match.
  void import_weights(const WeightBundle& bundle);

 private:
  core::NodeId head_input(core::Graph<T>& g, const PixelFeatures<T>& f, const std::vector<std::uint32_t>& pixels,
                          bool train_encoding) const;

  ArchDescriptor arch_;
  std::optional<Encoder<T>> encoder_;
  std::optional<HashGrid<T>> grid_;
  Mlp<T> head_;
};

extern template class RecoveryModel<float>;
extern template class RecoveryModel<double>;

}  // namespace uhal::models
