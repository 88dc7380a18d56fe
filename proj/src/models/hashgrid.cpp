#include "uhal/models/hashgrid.hpp"

#include <algorithm>
#include <cmath>

#include "uhal/core/error.hpp"
#include "uhal/models/init.hpp"

namespace uhal::models {

std::vector<HashGridLevel> hashgrid_layout(std::uint32_t levels, std::uint32_t log2_table,
                                           std::uint32_t base_resolution, float per_level_scale) {
  const std::size_t table = std::size_t{1} << log2_table;
  std::vector<HashGridLevel> out;
  std::size_t offset = 0;
  for (std::uint32_t l = 0; l < levels; ++l) {
    const double res = std::floor(base_resolution * std::pow(static_cast<double>(per_level_scale), l));
    if (res >= 4294967295.0) throw ShapeError("hashgrid: level resolution overflows 32 bits");
    const auto r = static_cast<std::uint32_t>(res);
    const std::size_t corners = (static_cast<std::size_t>(r) + 1) * (static_cast<std::size_t>(r) + 1);
    const bool dense = corners <= table;
    const std::size_t entries = dense ? corners : table;
    out.push_back({r, offset, entries, dense});
    offset += entries;
  }
  return out;
}

template <typename T>
HashGrid<T>::HashGrid(std::uint32_t levels, std::uint32_t features, std::uint32_t log2_table,
                      std::uint32_t base_resolution, float per_level_scale, core::RngStream& rng)
    : features_(features),
      table_size_(1u << log2_table),
      layout_(hashgrid_layout(levels, log2_table, base_resolution, per_level_scale)) {
  if (levels == 0 || features == 0) throw ShapeError("hashgrid: levels and features must be positive");
  const std::size_t rows = layout_.back().offset + layout_.back().entries;
  table_ = make_param<T>("hashgrid.table", uniform_tensor<T>({rows, features}, 1e-4, rng));
}

template <typename T>
HashGridLookup HashGrid<T>::lookup(const std::vector<std::array<double, 2>>& coords) const {
  HashGridLookup lk;
  lk.rows = coords.size();
  lk.levels = layout_.size();
  lk.index.resize(lk.rows * lk.levels * 4);
  lk.weight.resize(lk.rows * lk.levels * 4);
  for (std::size_t r = 0; r < lk.rows; ++r) {
    const double cx = std::clamp(coords[r][0], 0.0, 1.0);
    const double cy = std::clamp(coords[r][1], 0.0, 1.0);
    for (std::size_t l = 0; l < lk.levels; ++l) {
      const HashGridLevel& lv = layout_[l];
      const double px = cx * lv.resolution, py = cy * lv.resolution;
      const auto ix = std::min<std::uint32_t>(static_cast<std::uint32_t>(px), lv.resolution - 1);
      const auto iy = std::min<std::uint32_t>(static_cast<std::uint32_t>(py), lv.resolution - 1);
      const double fx = px - ix, fy = py - iy;
      const std::uint32_t cxs[4] = {ix, ix + 1, ix, ix + 1};
      const std::uint32_t cys[4] = {iy, iy, iy + 1, iy + 1};
      const double ws[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
      const std::size_t base = (r * lk.levels + l) * 4;
      for (int c = 0; c < 4; ++c) {
        const std::size_t local = lv.dense ? static_cast<std::size_t>(cys[c]) * (lv.resolution + 1) + cxs[c]
                                           : hashgrid_hash(cxs[c], cys[c], table_size_);
        lk.index[base + c] = static_cast<std::uint32_t>(lv.offset + local);
        lk.weight[base + c] = ws[c];
      }
    }
  }
  return lk;
}

namespace {

template <typename T>
core::Tensor<T> interpolate(const core::Tensor<T>& table, const HashGridLookup& lk, std::size_t f) {
  core::Tensor<T> out({lk.rows, lk.levels * f});
  for (std::size_t r = 0; r < lk.rows; ++r) {
    for (std::size_t l = 0; l < lk.levels; ++l) {
      const std::size_t base = (r * lk.levels + l) * 4;
      T* o = out.ptr() + r * lk.levels * f + l * f;
      for (int c = 0; c < 4; ++c) {
        const T w = static_cast<T>(lk.weight[base + c]);
        const T* e = table.ptr() + static_cast<std::size_t>(lk.index[base + c]) * f;
        for (std::size_t j = 0; j < f; ++j) o[j] += w * e[j];
      }
    }
  }
  return out;
}

}  // namespace

template <typename T>
core::Tensor<T> HashGrid<T>::encode(const HashGridLookup& lookup) const {
  return interpolate(table_.value, lookup, features_);
}

template <typename T>
core::NodeId HashGrid<T>::encode(core::Graph<T>& g, const HashGridLookup& lookup, bool train) const {
  auto& table = const_cast<core::Parameter<T>&>(table_);
  const core::NodeId tn = train ? g.parameter(table) : g.frozen(table);
  const std::size_t f = features_;
  // The lookup is copied into the closure so callers may drop theirs.
  return g.record(core::OpKind::HashGridEncode, {tn}, interpolate(table_.value, lookup, f),
                  [tn, f, lk = lookup](core::Graph<T>& gr, core::NodeId self) {
                    const core::Tensor<T>& dy = gr.grad(self);
                    core::Tensor<T>& dt = gr.grad_buffer(tn);
                    for (std::size_t r = 0; r < lk.rows; ++r) {
                      for (std::size_t l = 0; l < lk.levels; ++l) {
                        const std::size_t base = (r * lk.levels + l) * 4;
                        const T* d = dy.ptr() + r * lk.levels * f + l * f;
                        for (int c = 0; c < 4; ++c) {
                          const T w = static_cast<T>(lk.weight[base + c]);
                          T* e = dt.ptr() + static_cast<std::size_t>(lk.index[base + c]) * f;
                          for (std::size_t j = 0; j < f; ++j) e[j] += w * d[j];
                        }
                      }
                    }
                  });
}

template class HashGrid<float>;
template class HashGrid<double>;

}  // namespace uhal::models
