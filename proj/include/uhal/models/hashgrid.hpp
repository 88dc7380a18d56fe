#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "uhal/core/graph.hpp"
#include "uhal/core/rng.hpp"

namespace uhal::models {

struct HashGridLevel {
  std::uint32_t resolution;  // cells per axis; corners run 0..resolution
  std::size_t offset;        // first table row of this level
  std::size_t entries;
  bool dense;                // (resolution + 1)^2 fits the table: direct indexing
};

// Levels with resolution floor(base * scale^l). Each level owns
// min((res + 1)^2, 2^log2_table) table rows.
std::vector<HashGridLevel> hashgrid_layout(std::uint32_t levels, std::uint32_t log2_table,
                                           std::uint32_t base_resolution, float per_level_scale);

// Spatial hash of a grid corner, uint32 wrap-around arithmetic.
inline std::uint32_t hashgrid_hash(std::uint32_t ix, std::uint32_t iy, std::uint32_t table_size) {
  return (ix ^ (iy * 2654435761u)) % table_size;
}

// Per-row corner rows and bilinear weights for every level, computed once per
// coordinate set.
struct HashGridLookup {
  std::size_t rows = 0;
  std::size_t levels = 0;
  std::vector<std::uint32_t> index;  // rows * levels * 4
  std::vector<double> weight;        // rows * levels * 4
};

// Multiresolution grid of learned feature vectors, bilinearly interpolated.
template <typename T>
class HashGrid {
 public:
  HashGrid(std::uint32_t levels, std::uint32_t features, std::uint32_t log2_table, std::uint32_t base_resolution,
           float per_level_scale, core::RngStream& rng);

  std::size_t output_dim() const { return layout_.size() * features_; }
  std::size_t features() const { return features_; }
  const std::vector<HashGridLevel>& layout() const { return layout_; }
  std::uint32_t table_size() const { return table_size_; }

  core::Parameter<T>& table() { return table_; }
  const core::Parameter<T>& table() const { return table_; }

  // coords: N x 2 in [0, 1]^2, (x, y) order.
  HashGridLookup lookup(const std::vector<std::array<double, 2>>& coords) const;

  core::NodeId encode(core::Graph<T>& g, const HashGridLookup& lookup, bool train) const;
  core::Tensor<T> encode(const HashGridLookup& lookup) const;

 private:
  std::uint32_t features_;
  std::uint32_t table_size_;
  std::vector<HashGridLevel> layout_;
  core::Parameter<T> table_;
};

extern template class HashGrid<float>;
extern template class HashGrid<double>;

}  // namespace uhal::models
