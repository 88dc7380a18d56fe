#include "uhal/models/recovery_model.hpp"

#include <algorithm>
#include <cstring>

#include "uhal/core/error.hpp"
#include "uhal/core/ops.hpp"
#include "uhal/models/positional.hpp"

namespace uhal::models {

namespace ops = core::ops;
using core::NodeId;

std::size_t WeightBundle::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : encoding) n += t.value.size();
  for (const auto& t : head) n += t.value.size();
  return n;
}

namespace {

// Rows handled per graph when evaluating a whole image.
constexpr std::size_t kInferenceChunk = 16384;

template <typename T>
Mlp<T> make_head(const ArchDescriptor& a, std::uint64_t seed) {
  core::RngStream rng(core::CounterRng(seed).split(2));
  const Activation act = a.family == Family::Siren ? Activation::Sine : Activation::Relu;
  Mlp<T> head(a.head_input_dim(), a.mlp_hidden, a.mlp_layers, 3, act, a.siren_omega0, rng, "head");
  // Baselines train from scratch per image; starting them at a zero
  // residual makes their zero-shot output equal to y.
  if (a.family != Family::EncoderMlp) head.zero_output_layer();
  return head;
}

bool uses_rgb(const ArchDescriptor& a) { return a.input_mode == InputMode::XyRgb; }

template <typename T>
core::Tensor<T> coord_rows(std::size_t h, std::size_t w, std::size_t full_h, std::size_t full_w, std::size_t top,
                           std::size_t left) {
  core::Tensor<T> c({h * w, 2});
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t q = 0; q < w; ++q) {
      const auto xy = normalized_coord(top + r, left + q, full_h, full_w);
      c[(r * w + q) * 2] = static_cast<T>(xy[0]);
      c[(r * w + q) * 2 + 1] = static_cast<T>(xy[1]);
    }
  }
  return c;
}

template <typename T>
core::Tensor<T> concat_rows(const std::vector<const core::Tensor<T>*>& parts, std::size_t rows) {
  std::size_t total = 0;
  for (const auto* p : parts) total += p->size() / rows;
  core::Tensor<T> out({rows, total});
  std::size_t off = 0;
  for (const auto* p : parts) {
    const std::size_t d = p->size() / rows;
    for (std::size_t r = 0; r < rows; ++r) std::memcpy(out.ptr() + r * total + off, p->ptr() + r * d, d * sizeof(T));
    off += d;
  }
  return out;
}

}  // namespace

template <typename T>
RecoveryModel<T>::RecoveryModel(const ArchDescriptor& arch, std::uint64_t seed)
    : arch_(arch), head_(make_head<T>((arch.validate(), arch), seed)) {
  core::RngStream rng(core::CounterRng(seed).split(1));
  if (arch_.has_encoder()) {
    encoder_.emplace(arch_.encoder_kind, arch_.encoder_width, arch_.encoder_blocks, arch_.k, rng);
  } else if (arch_.has_hashgrid()) {
    grid_.emplace(arch_.hash_levels, arch_.hash_features, arch_.hash_log2_table, arch_.hash_base_resolution,
                  arch_.hash_per_level_scale, rng);
  }
}

template <typename T>
std::vector<core::Parameter<T>*> RecoveryModel<T>::encoding_parameters() {
  if (encoder_) return encoder_->parameters();
  if (grid_) return {&grid_->table()};
  return {};
}

template <typename T>
std::vector<const core::Parameter<T>*> RecoveryModel<T>::encoding_parameters() const {
  if (encoder_) return encoder_->parameters();
  if (grid_) return {&grid_->table()};
  return {};
}

template <typename T>
std::vector<core::Parameter<T>*> RecoveryModel<T>::parameters() {
  auto out = encoding_parameters();
  for (auto* p : head_parameters()) out.push_back(p);
  return out;
}

template <typename T>
PixelFeatures<T> RecoveryModel<T>::prepare(const core::Tensor<T>& y) const {
  if (y.rank() != 3 || y.dim(2) != 3) throw ShapeError("prepare: expected H x W x 3 image, got " + core::shape_str(y.shape()));
  PixelFeatures<T> f;
  f.height = y.dim(0);
  f.width = y.dim(1);
  f.y = y;
  const std::size_t n = f.height * f.width;
  const core::Tensor<T> rgb = y.reshaped({n, 3});
  const core::Tensor<T> coords = coord_rows<T>(f.height, f.width, f.height, f.width, 0, 0);

  if (encoder_) {
    core::Graph<T> g;
    const NodeId lat = encoder_->forward(g, g.constant(y));
    const core::Tensor<T> latent = g.value(lat).reshaped({n, arch_.k});
    if (arch_.input_mode == InputMode::LatentOnly) {
      f.rows = latent;
    } else {
      f.rows = concat_rows<T>({&coords, &latent}, n);
    }
  } else if (grid_) {
    if (uses_rgb(arch_)) f.rows = rgb;
  } else if (arch_.family == Family::NerfPe) {
    const core::Tensor<T> pe = positional_encode(coords, arch_.pe_frequencies);
    f.rows = uses_rgb(arch_) ? concat_rows<T>({&pe, &rgb}, n) : pe;
  } else {
    f.rows = uses_rgb(arch_) ? concat_rows<T>({&coords, &rgb}, n) : coords;
  }
  f.dim = f.rows.empty() ? 0 : f.rows.size() / n;
  return f;
}

template <typename T>
NodeId RecoveryModel<T>::head_input(core::Graph<T>& g, const PixelFeatures<T>& f,
                                    const std::vector<std::uint32_t>& pixels, bool train_encoding) const {
  const std::size_t n = f.height * f.width;
  for (auto p : pixels) {
    if (p >= n) throw ShapeError("pixel index " + std::to_string(p) + " outside a " + std::to_string(f.height) +
                                 " x " + std::to_string(f.width) + " image");
  }
  core::Tensor<T> stat;
  if (f.dim > 0) {
    stat = core::Tensor<T>({pixels.size(), f.dim});
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      std::memcpy(stat.ptr() + i * f.dim, f.rows.ptr() + static_cast<std::size_t>(pixels[i]) * f.dim,
                  f.dim * sizeof(T));
    }
  }
  if (!grid_) return g.constant(std::move(stat));

  std::vector<std::array<double, 2>> coords(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    coords[i] = normalized_coord(pixels[i] / f.width, pixels[i] % f.width, f.height, f.width);
  }
  const NodeId enc = grid_->encode(g, grid_->lookup(coords), train_encoding);
  if (f.dim == 0) return enc;
  return ops::concat_channels(g, {enc, g.constant(std::move(stat))});
}

template <typename T>
NodeId RecoveryModel<T>::residual_rows(core::Graph<T>& g, const PixelFeatures<T>& f,
                                       const std::vector<std::uint32_t>& pixels, bool train_head,
                                       bool train_encoding) {
  if (train_encoding && encoder_) {
    throw std::logic_error("residual_rows: the conv encoder is frozen here; use residual_map to train it");
  }
  return head_.forward(g, head_input(g, f, pixels, train_encoding), train_head);
}

template <typename T>
NodeId RecoveryModel<T>::residual_rows(core::Graph<T>& g, const PixelFeatures<T>& f,
                                       const std::vector<std::uint32_t>& pixels) const {
  return head_.forward(g, head_input(g, f, pixels, false));
}

template <typename T>
NodeId RecoveryModel<T>::residual_map(core::Graph<T>& g, NodeId y_crop, std::size_t full_h, std::size_t full_w,
                                      std::size_t top, std::size_t left, bool train) {
  const auto& s = g.shape(y_crop);
  if (s.size() != 3 || s[2] != 3) throw ShapeError("residual_map: expected h x w x 3 crop, got " + core::shape_str(s));
  const std::size_t h = s[0], w = s[1], n = h * w;
  if (top + h > full_h || left + w > full_w) throw ShapeError("residual_map: crop exceeds the full image");
  const core::Tensor<T> coords = coord_rows<T>(h, w, full_h, full_w, top, left);
  const core::Tensor<T> rgb = g.value(y_crop).reshaped({n, 3});

  NodeId in;
  if (encoder_) {
    const NodeId lat = ops::reshape(g, encoder_->forward(g, y_crop, train), {n, std::size_t{arch_.k}});
    in = arch_.input_mode == InputMode::LatentOnly ? lat : ops::concat_channels(g, {g.constant(coords), lat});
  } else if (grid_) {
    std::vector<std::array<double, 2>> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = {static_cast<double>(coords[2 * i]), static_cast<double>(coords[2 * i + 1])};
    in = grid_->encode(g, grid_->lookup(c), train);
    if (uses_rgb(arch_)) in = ops::concat_channels(g, {in, g.constant(rgb)});
  } else if (arch_.family == Family::NerfPe) {
    const core::Tensor<T> pe = positional_encode(coords, arch_.pe_frequencies);
    in = g.constant(uses_rgb(arch_) ? concat_rows<T>({&pe, &rgb}, n) : pe);
  } else {
    in = g.constant(uses_rgb(arch_) ? concat_rows<T>({&coords, &rgb}, n) : coords);
  }
  return ops::reshape(g, head_.forward(g, in, train), {h, w, 3});
}

template <typename T>
core::Tensor<T> RecoveryModel<T>::residual_image(const PixelFeatures<T>& f) const {
  const std::size_t n = f.height * f.width;
  core::Tensor<T> out({f.height, f.width, 3});
  std::vector<std::uint32_t> idx;
  for (std::size_t start = 0; start < n; start += kInferenceChunk) {
    const std::size_t end = std::min(n, start + kInferenceChunk);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = static_cast<std::uint32_t>(i);
    core::Graph<T> g;
    const NodeId r = residual_rows(g, f, idx);
    std::memcpy(out.ptr() + start * 3, g.value(r).ptr(), (end - start) * 3 * sizeof(T));
  }
  return out;
}

template <typename T>
core::Tensor<T> RecoveryModel<T>::recover(const PixelFeatures<T>& f) const {
  core::Tensor<T> out = residual_image(f);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f.y[i] - out[i];
  return out;
}

template <typename T>
core::Tensor<T> RecoveryModel<T>::recover(const core::Tensor<T>& y) const {
  return recover(prepare(y));
}

template <typename T>
core::Tensor<T> RecoveryModel<T>::decode_recover(const PixelFeatures<T>& f,
                                                 const std::vector<PixelIndex>& pixels) const {
  std::vector<std::uint32_t> idx;
  idx.reserve(pixels.size());
  for (const auto& p : pixels) {
    if (p.row >= f.height || p.col >= f.width) {
      throw ShapeError("decode_recover: pixel (" + std::to_string(p.row) + ", " + std::to_string(p.col) +
                       ") outside a " + std::to_string(f.height) + " x " + std::to_string(f.width) + " image");
    }
    idx.push_back(static_cast<std::uint32_t>(p.row * f.width + p.col));
  }
  core::Graph<T> g;
  core::Tensor<T> out = g.value(residual_rows(g, f, idx));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) out[i * 3 + c] = f.y[static_cast<std::size_t>(idx[i]) * 3 + c] - out[i * 3 + c];
  }
  return out;
}

namespace {

template <typename T>
std::vector<NamedTensor> snapshot(const std::vector<const core::Parameter<T>*>& params) {
  std::vector<NamedTensor> out;
  for (const auto* p : params) out.push_back({p->name, p->value.template cast<float>()});
  return out;
}

template <typename T>
void check_restore(const std::vector<core::Parameter<T>*>& params, const std::vector<NamedTensor>& tensors,
                   const char* what) {
  if (params.size() != tensors.size()) {
    throw MetadataError(MetadataError::Kind::ArchMismatch, std::string(what) + ": expected " +
                                                               std::to_string(params.size()) + " tensors, got " +
                                                               std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->value.size() != tensors[i].value.size()) {
      throw MetadataError(MetadataError::Kind::ArchMismatch,
                          std::string(what) + ": tensor " + params[i]->name + " expects " +
                              std::to_string(params[i]->value.size()) + " values, got " +
                              std::to_string(tensors[i].value.size()));
    }
  }
}

template <typename T>
void restore(const std::vector<core::Parameter<T>*>& params, const std::vector<NamedTensor>& tensors) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value = tensors[i].value.template cast<T>().reshaped(params[i]->value.shape());
  }
}

}  // namespace

template <typename T>
WeightBundle RecoveryModel<T>::export_weights() const {
  return {snapshot<T>(encoding_parameters()), snapshot<T>(head_parameters())};
}

template <typename T>
void RecoveryModel<T>::import_weights(const WeightBundle& bundle) {
  if (!bundle.encoding.empty()) check_restore<T>(encoding_parameters(), bundle.encoding, "encoding weights");
  check_restore<T>(head_parameters(), bundle.head, "head weights");
  if (!bundle.encoding.empty()) restore<T>(encoding_parameters(), bundle.encoding);
  restore<T>(head_parameters(), bundle.head);
}

template class RecoveryModel<float>;
template class RecoveryModel<double>;

}  // namespace uhal::models
