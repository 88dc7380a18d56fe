#pragma once

// Gradient-check fixtures shared by the unit tests and the acceptance runner.

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "uhal/core/gradcheck.hpp"
#include "uhal/core/graph.hpp"
#include "uhal/core/ops.hpp"
#include "uhal/core/rng.hpp"
#include "uhal/models/hashgrid.hpp"
#include "uhal/models/recovery_model.hpp"

namespace uhal::testkit {

using core::Graph;
using core::NodeId;
using core::Parameter;
using core::Shape;
using core::Tensor;

inline Tensor<double> random_tensor(Shape shape, core::RngStream& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

// Values kept away from zero so kinks (ReLU) stay outside the FD stencil.
inline Tensor<double> away_from_zero(Shape shape, core::RngStream& rng) {
  Tensor<double> t = random_tensor(std::move(shape), rng);
  for (auto& v : t.storage()) {
    if (std::abs(v) < 0.05) v = v < 0 ? -0.3 : 0.3;
  }
  return t;
}

// Reduces any output to a scalar with fixed, non-uniform weights so every
// output entry contributes a distinct gradient.
inline NodeId weighted_sum(Graph<double>& g, NodeId out) {
  Tensor<double> w(g.shape(out));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.3 * static_cast<double>(i) + 0.7);
  return core::ops::sum(g, core::ops::mul(g, out, g.constant(std::move(w))));
}

struct GradCase {
  std::string op;
  std::string variant;
  // Owned storage; pointers in `params` stay valid because the vector is
  // sized up front.
  std::shared_ptr<std::vector<Parameter<double>>> storage;
  std::vector<Parameter<double>*> params;
  std::function<NodeId(Graph<double>&)> loss;
  // Extra state the loss closure needs (hash-grid lookups, etc.).
  std::shared_ptr<void> keepalive;
};

namespace detail {

inline GradCase make_case(std::string op, std::string variant, std::vector<Tensor<double>> tensors) {
  GradCase c;
  c.op = std::move(op);
  c.variant = std::move(variant);
  c.storage = std::make_shared<std::vector<Parameter<double>>>(tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    (*c.storage)[i].name = c.op + ".in" + std::to_string(i);
    (*c.storage)[i].value = std::move(tensors[i]);
    c.params.push_back(&(*c.storage)[i]);
  }
  return c;
}

template <typename F>
GradCase unary(const std::string& op, const std::string& variant, Tensor<double> x, F f) {
  GradCase c = make_case(op, variant, {std::move(x)});
  auto* p = c.params[0];
  c.loss = [p, f](Graph<double>& g) { return weighted_sum(g, f(g, g.parameter(*p))); };
  return c;
}

template <typename F>
GradCase binary(const std::string& op, const std::string& variant, Tensor<double> a, Tensor<double> b, F f) {
  GradCase c = make_case(op, variant, {std::move(a), std::move(b)});
  auto* pa = c.params[0];
  auto* pb = c.params[1];
  c.loss = [pa, pb, f](Graph<double>& g) { return weighted_sum(g, f(g, g.parameter(*pa), g.parameter(*pb))); };
  return c;
}

}  // namespace detail

// At least three shapes for every differentiable op kind.
inline std::vector<GradCase> op_grad_cases(std::uint64_t seed) {
  namespace ops = core::ops;
  using detail::binary;
  using detail::make_case;
  using detail::unary;
  core::RngStream rng(seed);
  std::vector<GradCase> cases;

  struct ConvShape {
    std::size_t h, w, cin, cout, k, stride, pad;
  };
  for (const ConvShape s : {ConvShape{5, 5, 2, 3, 3, 1, 1}, ConvShape{6, 7, 3, 2, 3, 2, 1},
                            ConvShape{4, 6, 1, 4, 2, 2, 0}, ConvShape{3, 3, 4, 2, 1, 1, 0}}) {
    GradCase c = make_case("conv2d", std::to_string(s.h) + "x" + std::to_string(s.w) + "x" + std::to_string(s.cin),
                           {random_tensor({s.h, s.w, s.cin}, rng), random_tensor({s.k, s.k, s.cin, s.cout}, rng),
                            random_tensor({s.cout}, rng)});
    auto ps = c.params;
    c.loss = [ps, s](Graph<double>& g) {
      return weighted_sum(g, ops::conv2d(g, g.parameter(*ps[0]), g.parameter(*ps[1]), g.parameter(*ps[2]),
                                         {s.stride, s.pad}));
    };
    cases.push_back(std::move(c));
  }

  struct DwShape {
    std::size_t h, w, c, k, pad;
  };
  for (const DwShape s : {DwShape{5, 5, 3, 3, 1}, DwShape{6, 4, 2, 3, 1}, DwShape{5, 7, 4, 1, 0}}) {
    GradCase c = make_case("depthwise_conv2d", std::to_string(s.h) + "x" + std::to_string(s.w),
                           {random_tensor({s.h, s.w, s.c}, rng), random_tensor({s.k, s.k, s.c}, rng),
                            random_tensor({s.c}, rng)});
    auto ps = c.params;
    c.loss = [ps, s](Graph<double>& g) {
      return weighted_sum(
          g, ops::depthwise_conv2d(g, g.parameter(*ps[0]), g.parameter(*ps[1]), g.parameter(*ps[2]), s.pad));
    };
    cases.push_back(std::move(c));
  }

  for (const auto& [n, din, dout] : std::vector<std::array<std::size_t, 3>>{{4, 3, 5}, {7, 6, 2}, {1, 8, 8}}) {
    GradCase c = make_case("linear", std::to_string(n) + "x" + std::to_string(din) + "->" + std::to_string(dout),
                           {random_tensor({n, din}, rng), random_tensor({din, dout}, rng), random_tensor({dout}, rng)});
    auto ps = c.params;
    c.loss = [ps](Graph<double>& g) {
      return weighted_sum(g, ops::linear(g, g.parameter(*ps[0]), g.parameter(*ps[1]), g.parameter(*ps[2])));
    };
    cases.push_back(std::move(c));
  }

  const std::vector<Shape> shapes = {{5, 4}, {3, 3, 2}, {17}};
  for (const auto& s : shapes) {
    cases.push_back(unary("relu", core::shape_str(s), away_from_zero(s, rng),
                          [](Graph<double>& g, NodeId x) { return ops::relu(g, x); }));
  }
  for (double omega : {1.0, 2.5, 30.0}) {
    cases.push_back(unary("sine", "omega=" + std::to_string(omega), random_tensor({4, 3}, rng),
                          [omega](Graph<double>& g, NodeId x) { return ops::sine(g, x, omega); }));
  }
  for (const auto& s : shapes) {
    cases.push_back(binary("add", core::shape_str(s), random_tensor(s, rng), random_tensor(s, rng),
                           [](Graph<double>& g, NodeId a, NodeId b) { return ops::add(g, a, b); }));
    cases.push_back(binary("sub", core::shape_str(s), random_tensor(s, rng), random_tensor(s, rng),
                           [](Graph<double>& g, NodeId a, NodeId b) { return ops::sub(g, a, b); }));
    cases.push_back(binary("mul", core::shape_str(s), random_tensor(s, rng), random_tensor(s, rng),
                           [](Graph<double>& g, NodeId a, NodeId b) { return ops::mul(g, a, b); }));
  }
  for (double f : {-0.5, 2.0, 7.25}) {
    cases.push_back(unary("scale", "factor=" + std::to_string(f), random_tensor({3, 5}, rng),
                          [f](Graph<double>& g, NodeId x) { return ops::scale(g, x, f); }));
  }
  for (const Shape& s : {Shape{4, 6}, Shape{3, 3, 4}, Shape{2, 2, 2, 2}}) {
    cases.push_back(unary("simple_gate", core::shape_str(s), random_tensor(s, rng),
                          [](Graph<double>& g, NodeId x) { return ops::simple_gate(g, x); }));
  }
  for (const Shape& s : {Shape{5, 4}, Shape{3, 3, 6}, Shape{2, 4, 3}}) {
    const std::size_t c = s.back();
    for (const std::string op : {"layer_norm", "channel_norm"}) {
      GradCase gc = make_case(op, core::shape_str(s),
                              {random_tensor(s, rng), random_tensor({c}, rng, 0.5, 1.5), random_tensor({c}, rng)});
      auto ps = gc.params;
      const bool layer = op == "layer_norm";
      gc.loss = [ps, layer](Graph<double>& g) {
        const NodeId x = g.parameter(*ps[0]);
        const NodeId gm = g.parameter(*ps[1]);
        const NodeId bt = g.parameter(*ps[2]);
        return weighted_sum(g, layer ? ops::layer_norm(g, x, gm, bt) : ops::channel_norm(g, x, gm, bt));
      };
      cases.push_back(std::move(gc));
    }
  }
  for (const Shape& s : {Shape{3, 4, 2}, Shape{1, 1, 5}, Shape{5, 2, 3}}) {
    cases.push_back(unary("global_avg_pool", core::shape_str(s), random_tensor(s, rng),
                          [](Graph<double>& g, NodeId x) { return ops::global_avg_pool(g, x); }));
    cases.push_back(binary("channel_scale", core::shape_str(s), random_tensor(s, rng),
                           random_tensor({1, 1, s.back()}, rng),
                           [](Graph<double>& g, NodeId x, NodeId sc) { return ops::channel_scale(g, x, sc); }));
  }
  for (const auto& [s, f] : std::vector<std::pair<Shape, std::size_t>>{
           {{2, 3, 4}, 2}, {{1, 1, 8}, 2}, {{2, 2, 9}, 3}}) {
    const std::size_t factor = f;
    cases.push_back(unary("pixel_shuffle", core::shape_str(s), random_tensor(s, rng),
                          [factor](Graph<double>& g, NodeId x) { return ops::pixel_shuffle(g, x, factor); }));
  }
  for (const auto& widths : std::vector<std::vector<std::size_t>>{{1, 2}, {3, 1, 2}, {2, 2}}) {
    std::vector<Tensor<double>> parts;
    for (std::size_t w : widths) parts.push_back(random_tensor({3, 2, w}, rng));
    GradCase c = make_case("concat", std::to_string(widths.size()) + " parts", std::move(parts));
    auto ps = c.params;
    c.loss = [ps](Graph<double>& g) {
      std::vector<NodeId> ids;
      for (auto* p : ps) ids.push_back(g.parameter(*p));
      return weighted_sum(g, ops::concat_channels(g, ids));
    };
    cases.push_back(std::move(c));
  }
  for (const auto& [s, b, r] : std::vector<std::tuple<Shape, std::size_t, std::size_t>>{
           {{3, 3, 2}, 1, 0}, {{2, 5, 1}, 0, 3}, {{4, 4, 3}, 2, 2}}) {
    const std::size_t bottom = b, right = r;
    cases.push_back(unary("pad_spatial", core::shape_str(s), random_tensor(s, rng),
                          [bottom, right](Graph<double>& g, NodeId x) { return ops::pad_spatial(g, x, bottom, right); }));
    const std::size_t ch = s[0] > bottom ? s[0] - bottom : s[0];
    const std::size_t cw = s[1] > right ? s[1] - right : s[1];
    cases.push_back(unary("crop_spatial", core::shape_str(s), random_tensor(s, rng),
                          [ch, cw](Graph<double>& g, NodeId x) { return ops::crop_spatial(g, x, ch, cw); }));
  }
  for (const auto& rows : std::vector<std::vector<std::uint32_t>>{{0, 2, 2, 4}, {1}, {3, 0, 3, 1, 1, 2}}) {
    cases.push_back(unary("gather_rows", std::to_string(rows.size()) + " rows", random_tensor({5, 3}, rng),
                          [rows](Graph<double>& g, NodeId x) { return ops::gather_rows(g, x, rows); }));
  }
  for (const auto& [from, to] : std::vector<std::pair<Shape, Shape>>{
           {{2, 3, 4}, {6, 4}}, {{12}, {3, 4}}, {{2, 2, 2}, {8}}}) {
    const Shape target = to;
    cases.push_back(unary("reshape", core::shape_str(from), random_tensor(from, rng),
                          [target](Graph<double>& g, NodeId x) { return ops::reshape(g, x, target); }));
  }
  for (const auto& s : shapes) {
    // Scalar-valued ops are differentiated directly.
    GradCase m = make_case("mse_loss", core::shape_str(s), {random_tensor(s, rng), random_tensor(s, rng)});
    auto ps = m.params;
    m.loss = [ps](Graph<double>& g) { return ops::mse_loss(g, g.parameter(*ps[0]), g.parameter(*ps[1])); };
    cases.push_back(std::move(m));
    GradCase su = make_case("sum", core::shape_str(s), {random_tensor(s, rng)});
    auto p0 = su.params[0];
    su.loss = [p0](Graph<double>& g) {
      const NodeId x = g.parameter(*p0);
      return ops::sum(g, ops::mul(g, x, x));
    };
    cases.push_back(std::move(su));
    GradCase me = make_case("mean", core::shape_str(s), {random_tensor(s, rng)});
    auto p1 = me.params[0];
    me.loss = [p1](Graph<double>& g) {
      const NodeId x = g.parameter(*p1);
      return ops::mean(g, ops::mul(g, x, x));
    };
    cases.push_back(std::move(me));
  }
  struct GridShape {
    std::uint32_t levels, features, log2_table, base;
    std::size_t points;
  };
  for (const GridShape s : {GridShape{2, 2, 4, 2, 5}, GridShape{3, 1, 5, 3, 9}, GridShape{4, 3, 4, 2, 4}}) {
    core::RngStream init(rng.below(1u << 30));
    auto grid = std::make_shared<models::HashGrid<double>>(s.levels, s.features, s.log2_table, s.base, 2.0f, init);
    grid->table().value = random_tensor(grid->table().value.shape(), rng);
    std::vector<std::array<double, 2>> coords;
    for (std::size_t i = 0; i < s.points; ++i) coords.push_back({rng.uniform(), rng.uniform()});
    auto lookup = std::make_shared<models::HashGridLookup>(grid->lookup(coords));
    GradCase c;
    c.op = "hashgrid_encode";
    c.variant = "L=" + std::to_string(s.levels) + " F=" + std::to_string(s.features);
    c.params = {&grid->table()};
    c.loss = [grid, lookup](Graph<double>& g) { return weighted_sum(g, grid->encode(g, *lookup, true)); };
    c.keepalive = std::make_shared<std::pair<decltype(grid), decltype(lookup)>>(grid, lookup);
    cases.push_back(std::move(c));
  }
  return cases;
}

// Small encoder + head composites: the whole residual path, differentiated
// through the conv encoder.
struct CompositeCase {
  std::string name;
  std::shared_ptr<models::RecoveryModel<double>> model;
  std::shared_ptr<Tensor<double>> y;
  std::function<NodeId(Graph<double>&)> loss;
};

inline std::vector<CompositeCase> composite_grad_cases(std::uint64_t seed) {
  std::vector<CompositeCase> out;
  core::RngStream rng(seed);
  struct Variant {
    models::EncoderKind kind;
    std::size_t h, w;
  };
  for (const Variant v : {Variant{models::EncoderKind::Naf, 8, 8}, Variant{models::EncoderKind::Naf, 9, 11},
                          Variant{models::EncoderKind::Base, 10, 12}}) {
    models::ArchDescriptor arch = models::ArchDescriptor::ours(32);
    arch.encoder_kind = v.kind;
    arch.encoder_width = 4;
    arch.k = 32;
    arch.mlp_hidden = 8;
    CompositeCase c;
    c.name = models::to_string(v.kind) + " " + std::to_string(v.h) + "x" + std::to_string(v.w);
    c.model = std::make_shared<models::RecoveryModel<double>>(arch, rng.below(1u << 30));
    // Zero-initialized NAF scales would hide the block internals.
    for (auto* p : c.model->parameters()) {
      for (auto& x : p->value.storage()) x += rng.uniform(-0.2, 0.2);
    }
    c.y = std::make_shared<Tensor<double>>(random_tensor({v.h, v.w, 3}, rng, 0.0, 1.0));
    auto x = std::make_shared<Tensor<double>>(random_tensor({v.h, v.w, 3}, rng, 0.0, 1.0));
    auto model = c.model;
    auto y = c.y;
    c.loss = [model, y, x](Graph<double>& g) {
      const NodeId yn = g.constant(*y);
      const NodeId res = model->residual_map(g, yn, y->dim(0), y->dim(1), 0, 0, true);
      return core::ops::mse_loss(g, core::ops::sub(g, yn, res), g.constant(*x));
    };
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace uhal::testkit
