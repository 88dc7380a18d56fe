#pragma once

#include <vector>

#include "uhal/core/graph.hpp"
#include "uhal/core/rng.hpp"
#include "uhal/models/arch.hpp"

namespace uhal::models {

// Smallest spatial size the encoder accepts.
inline constexpr std::size_t kMinEncoderSize = 8;

// Image-to-latent network. Naf: intro conv, NAF block, 2x2 stride-2 down
// conv, middle NAF block at twice the width, 1x1 conv + pixel shuffle up,
// NAF block (with the encoder stage added back in), 3x3 conv to k channels.
// Base: two conv3x3-norm-ReLU layers then conv3x3 to k channels.
template <typename T>
class Encoder {
 public:
  Encoder(EncoderKind kind, std::size_t width, std::size_t blocks, std::size_t k, core::RngStream& rng);

  EncoderKind kind() const { return kind_; }
  std::size_t latent_dim() const { return k_; }

  // y: H x W x 3 with H, W >= kMinEncoderSize. Returns H x W x k.
  core::NodeId forward(core::Graph<T>& g, core::NodeId y, bool train);
  core::NodeId forward(core::Graph<T>& g, core::NodeId y) const;

  std::vector<core::Parameter<T>*> parameters();
  std::vector<const core::Parameter<T>*> parameters() const;
  std::size_t parameter_count() const;

 private:
  struct Ctx;
  std::size_t add(const std::string& name, core::Tensor<T> value);
  std::size_t conv(const std::string& name, std::size_t kh, std::size_t cin, std::size_t cout, bool bias,
                   core::RngStream& rng);
  void naf_block(const std::string& name, std::size_t c, core::RngStream& rng);
  core::NodeId run(core::Graph<T>& g, core::NodeId y, bool train) const;
  core::NodeId run_naf(Ctx& ctx, core::NodeId x, std::size_t c) const;

  EncoderKind kind_;
  std::size_t width_, blocks_, k_;
  std::vector<core::Parameter<T>> params_;
};

extern template class Encoder<float>;
extern template class Encoder<double>;

}  // namespace uhal::models
