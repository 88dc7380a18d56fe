#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "uhal/core/graph.hpp"

namespace uhal::core::ops {

struct Conv2dAttrs {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// x: H x W x Cin, weight: kh x kw x Cin x Cout, bias: Cout. Zero padding.
template <typename T>
NodeId conv2d(Graph<T>& g, NodeId x, NodeId weight, std::optional<NodeId> bias, Conv2dAttrs attrs);

// x: H x W x C, weight: kh x kw x C, bias: C. Stride 1.
template <typename T>
NodeId depthwise_conv2d(Graph<T>& g, NodeId x, NodeId weight, std::optional<NodeId> bias,
                        std::size_t padding);

// Applies x @ weight + bias over the last axis. weight: Din x Dout.
template <typename T>
NodeId linear(Graph<T>& g, NodeId x, NodeId weight, std::optional<NodeId> bias);

template <typename T>
NodeId relu(Graph<T>& g, NodeId x);
// sin(omega * x)
template <typename T>
NodeId sine(Graph<T>& g, NodeId x, T omega = T(1));
template <typename T>
NodeId add(Graph<T>& g, NodeId a, NodeId b);
template <typename T>
NodeId sub(Graph<T>& g, NodeId a, NodeId b);
template <typename T>
NodeId mul(Graph<T>& g, NodeId a, NodeId b);
template <typename T>
NodeId scale(Graph<T>& g, NodeId x, T factor);

// Splits the last axis in halves and multiplies them.
template <typename T>
NodeId simple_gate(Graph<T>& g, NodeId x);

// Normalizes each row over the last axis, then per-channel affine.
template <typename T>
NodeId layer_norm(Graph<T>& g, NodeId x, NodeId gamma, NodeId beta, T eps = T(1e-6));
// Normalizes each channel over all rows (batch-statistics normalization).
template <typename T>
NodeId channel_norm(Graph<T>& g, NodeId x, NodeId gamma, NodeId beta, T eps = T(1e-5));

// H x W x C -> 1 x 1 x C
template <typename T>
NodeId global_avg_pool(Graph<T>& g, NodeId x);
// Multiplies every row of x by a length-C vector s.
template <typename T>
NodeId channel_scale(Graph<T>& g, NodeId x, NodeId s);

// H x W x (C r^2) -> Hr x Wr x C, channel index c*r^2 + i*r + j feeds offset (i, j).
template <typename T>
NodeId pixel_shuffle(Graph<T>& g, NodeId x, std::size_t factor);

template <typename T>
NodeId concat_channels(Graph<T>& g, const std::vector<NodeId>& parts);

template <typename T>
NodeId pad_spatial(Graph<T>& g, NodeId x, std::size_t bottom, std::size_t right);
template <typename T>
NodeId crop_spatial(Graph<T>& g, NodeId x, std::size_t height, std::size_t width);

// Rows of a N x D tensor selected by index (repeats allowed).
template <typename T>
NodeId gather_rows(Graph<T>& g, NodeId x, const std::vector<std::uint32_t>& rows);

template <typename T>
NodeId reshape(Graph<T>& g, NodeId x, Shape shape);

// mean((a - b)^2) over all elements.
template <typename T>
NodeId mse_loss(Graph<T>& g, NodeId a, NodeId b);
template <typename T>
NodeId sum(Graph<T>& g, NodeId x);
template <typename T>
NodeId mean(Graph<T>& g, NodeId x);

}  // namespace uhal::core::ops
