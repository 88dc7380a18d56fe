#include <gtest/gtest.h>

#include <cmath>
#include <thread>

#include "support/op_cases.hpp"
#include "uhal/codec/container.hpp"
#include "uhal/core/error.hpp"
#include "uhal/data/synth.hpp"
#include "uhal/models/arch.hpp"
#include "uhal/models/init.hpp"
#include "uhal/models/positional.hpp"
#include "uhal/train/finetune.hpp"
#include "uhal/train/metrics.hpp"

namespace {

using namespace uhal;
using core::Graph;
using core::NodeId;
using core::Tensor;
using models::ArchDescriptor;
using models::RecoveryModel;

Tensor<float> random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  core::RngStream rng(seed);
  return testkit::random_tensor({h, w, 3}, rng, 0.0, 1.0).cast<float>();
}

std::size_t counted(const std::vector<core::Parameter<float>*>& ps) {
  std::size_t n = 0;
  for (auto* p : ps) n += p->value.size();
  return n;
}

TEST(Arch, DecoderMlpHasExactly8643Parameters) {
  const ArchDescriptor a = ArchDescriptor::ours(64);
  EXPECT_EQ(head_parameter_count(a), 8643u);
  EXPECT_EQ((66 * 64 + 64) + (64 * 64 + 64) + (64 * 3 + 3), 8643);
  RecoveryModel<float> m(a, 0);
  EXPECT_EQ(counted(m.head_parameters()), 8643u);
}

TEST(Arch, EncoderWithin15PercentOf31750) {
  RecoveryModel<float> m(ArchDescriptor::ours(64), 0);
  const double n = static_cast<double>(counted(m.encoding_parameters()));
  EXPECT_GE(n, 31750.0 * 0.85);
  EXPECT_LE(n, 31750.0 * 1.15);
}

TEST(Arch, ClosedFormCountsMatchBuiltModels) {
  std::vector<ArchDescriptor> archs = {ArchDescriptor::ours(0), ArchDescriptor::ours(32), ArchDescriptor::ours(64),
                                       ArchDescriptor::ours(128), ArchDescriptor::ours_base_encoder(),
                                       ArchDescriptor::siren(), ArchDescriptor::nerf_pe(), ArchDescriptor::hashgrid()};
  ArchDescriptor wide = ArchDescriptor::ours(64);
  wide.encoder_blocks = 2;
  wide.mlp_hidden = 128;
  archs.push_back(wide);
  for (const auto& a : archs) {
    RecoveryModel<float> m(a, 1);
    EXPECT_EQ(counted(m.encoding_parameters()), encoding_parameter_count(a)) << to_json(a).dump();
    EXPECT_EQ(counted(m.head_parameters()), head_parameter_count(a)) << to_json(a).dump();
  }
}

TEST(Arch, SerializeRoundTripAndVersionCheck) {
  for (const auto& a : {ArchDescriptor::ours(64), ArchDescriptor::siren(), ArchDescriptor::hashgrid()}) {
    const auto bytes = a.serialize();
    EXPECT_EQ(ArchDescriptor::deserialize(bytes), a);
    auto bad = bytes;
    bad[0] = 99;
    try {
      ArchDescriptor::deserialize(bad);
      FAIL() << "expected MetadataError";
    } catch (const MetadataError& e) {
      EXPECT_EQ(e.kind(), MetadataError::Kind::UnsupportedVersion);
    }
  }
}

TEST(Arch, ValidationRules) {
  ArchDescriptor a = ArchDescriptor::ours(64);
  a.k = 16;
  EXPECT_THROW(a.validate(), ShapeError);
  ArchDescriptor z = ArchDescriptor::ours(0);
  EXPECT_EQ(z.input_mode, models::InputMode::Xy);
  EXPECT_FALSE(z.has_encoder());
  z.input_mode = models::InputMode::LatentXy;
  EXPECT_THROW(z.validate(), ShapeError);
  ArchDescriptor s = ArchDescriptor::siren();
  s.input_mode = models::InputMode::LatentOnly;
  EXPECT_THROW(s.validate(), ShapeError);
}

TEST(Arch, JsonIsStrict) {
  const ArchDescriptor a = ArchDescriptor::nerf_pe();
  EXPECT_EQ(models::arch_from_json(to_json(a)), a);
  nlohmann::json j = to_json(a);
  j["bogus"] = 1;
  EXPECT_THROW(models::arch_from_json(j), DataError);
}

TEST(Arch, BaselinesLandNearReferenceSize) {
  for (const auto& a : {ArchDescriptor::siren(), ArchDescriptor::nerf_pe(), ArchDescriptor::hashgrid()}) {
    const double bytes = 4.0 * static_cast<double>(total_parameter_count(a));
    EXPECT_LE(std::abs(bytes - models::kBaselineReferenceBytes),
              models::kBaselineSizeTolerance * models::kBaselineReferenceBytes)
        << models::to_string(a.family);
  }
}

TEST(Encoder, OutputShapeMatchesInput) {
  RecoveryModel<float> m(ArchDescriptor::ours(64), 3);
  for (const auto& [h, w] : std::vector<std::pair<std::size_t, std::size_t>>{{64, 64}, {63, 61}, {8, 9}, {17, 32}}) {
    Graph<float> g;
    const NodeId out = m.encoder()->forward(g, g.constant(random_image(h, w, h * 100 + w)));
    EXPECT_EQ(g.shape(out), (core::Shape{h, w, 64})) << h << "x" << w;
    for (float v : g.value(out).storage()) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(Encoder, DeterministicAndRejectsTinyInputs) {
  RecoveryModel<float> m(ArchDescriptor::ours(64), 3);
  const Tensor<float> y = random_image(20, 24, 5);
  Graph<float> g1, g2;
  const NodeId a = m.encoder()->forward(g1, g1.constant(y));
  const NodeId b = m.encoder()->forward(g2, g2.constant(y));
  EXPECT_TRUE(g1.value(a) == g2.value(b));
  Graph<float> g3;
  EXPECT_THROW(m.encoder()->forward(g3, g3.constant(random_image(7, 30, 1))), ShapeError);
}

TEST(Encoder, BaseVariantShapes) {
  RecoveryModel<float> m(ArchDescriptor::ours_base_encoder(), 3);
  Graph<float> g;
  const NodeId out = m.encoder()->forward(g, g.constant(random_image(15, 13, 2)));
  EXPECT_EQ(g.shape(out), (core::Shape{15, 13, 64}));
}

TEST(Recovery, ZeroOutputLayerReturnsYExactly) {
  for (const auto& a : {ArchDescriptor::ours(64), ArchDescriptor::ours(0), ArchDescriptor::siren(),
                        ArchDescriptor::nerf_pe(), ArchDescriptor::hashgrid()}) {
    RecoveryModel<float> m(a, 8);
    m.zero_output_layer();
    const Tensor<float> y = random_image(19, 23, 4);
    EXPECT_TRUE(m.recover(y) == y) << models::to_string(a.family);
  }
}

TEST(Recovery, FullImageEqualsPerPixel) {
  for (const auto& a : {ArchDescriptor::ours(64), ArchDescriptor::siren(), ArchDescriptor::hashgrid()}) {
    RecoveryModel<float> m(a, 2);
    const Tensor<float> y = random_image(12, 10, 9);
    const auto f = m.prepare(y);
    const Tensor<float> full = m.recover(f);
    for (std::size_t r = 0; r < 12; ++r) {
      for (std::size_t c = 0; c < 10; ++c) {
        const Tensor<float> px = m.decode_recover(f, {{r, c}});
        for (std::size_t ch = 0; ch < 3; ++ch) ASSERT_EQ(px[ch], full.at(r, c, ch)) << r << "," << c;
      }
    }
  }
}

TEST(Recovery, OutOfBoundsPixelRejected) {
  RecoveryModel<float> m(ArchDescriptor::ours(64), 2);
  const auto f = m.prepare(random_image(10, 10, 1));
  EXPECT_THROW(m.decode_recover(f, {{10, 0}}), ShapeError);
  EXPECT_THROW(m.decode_recover(f, {{0, 10}}), ShapeError);
}

TEST(Recovery, PureAndSafeForConcurrentReads) {
  const RecoveryModel<float> m(ArchDescriptor::ours(64), 6);
  const Tensor<float> y1 = random_image(24, 24, 1), y2 = random_image(24, 24, 2);
  const Tensor<float> r1 = m.recover(y1), r2 = m.recover(y2);
  Tensor<float> c1, c2;
  std::thread t1([&] { c1 = m.recover(y1); });
  std::thread t2([&] { c2 = m.recover(y2); });
  t1.join();
  t2.join();
  EXPECT_TRUE(c1 == r1);
  EXPECT_TRUE(c2 == r2);
}

TEST(Recovery, FinetunedToyModelBeatsY) {
  const Tensor<float> x = data::procedural_image(32, 32, 77);
  const Tensor<float> y = data::synth_hallucinate(x, {data::SynthMode::DetailInject, 0.5f, 78});
  RecoveryModel<float> m(ArchDescriptor::ours(64), 1);
  train::TrainConfig cfg;
  cfg.phase = train::Phase::Finetune;
  cfg.iterations = 300;
  cfg.batch_pixels = 512;
  cfg.trace_every = 25;
  train::finetune(m, {x, y, "toy", "custom"}, cfg);
  EXPECT_GT(train::psnr(train::clamp01(m.recover(y)), x), train::psnr(y, x));
}

TEST(Recovery, ImportRejectsMismatchedBundles) {
  RecoveryModel<float> a(ArchDescriptor::ours(64), 1);
  RecoveryModel<float> b(ArchDescriptor::ours(32), 1);
  try {
    a.import_weights(b.export_weights());
    FAIL() << "expected MetadataError";
  } catch (const MetadataError& e) {
    EXPECT_EQ(e.kind(), MetadataError::Kind::ArchMismatch);
  }
  RecoveryModel<float> c(ArchDescriptor::ours(64), 9);
  c.import_weights(a.export_weights());
  EXPECT_EQ(c.export_weights(), a.export_weights());
}

TEST(Siren, SerializedSizeNear204KB) {
  const std::size_t bytes = codec::container_size(ArchDescriptor::siren(), true);
  EXPECT_GE(bytes, 202'000u);
  EXPECT_LE(bytes, 206'000u);
}

TEST(Siren, ZeroInputZeroBiasGivesZero) {
  core::RngStream rng(1);
  models::Mlp<float> mlp(5, 128, 4, 3, models::Activation::Sine, 30.0, rng);
  auto ps = mlp.parameters();
  for (std::size_t i = 1; i < ps.size(); i += 2) ps[i]->value.fill(0.0f);
  Graph<float> g;
  const NodeId out = mlp.forward(g, g.constant(Tensor<float>({4, 5})));
  for (float v : g.value(out).storage()) EXPECT_EQ(v, 0.0f);
}

TEST(Siren, RejectsWrongInputArity) {
  core::RngStream rng(1);
  models::Mlp<float> mlp(5, 16, 2, 3, models::Activation::Sine, 30.0, rng);
  Graph<float> g;
  EXPECT_THROW(mlp.forward(g, g.constant(Tensor<float>({4, 2}))), ShapeError);
}

TEST(Siren, InitStaysWithinBoundsOver1e5Draws) {
  constexpr double omega = 30.0;
  const double first_bound = 1.0 / 5.0;
  const double hidden_bound = std::sqrt(6.0 / 128.0) / omega;
  std::vector<double> first, hidden;
  for (std::uint64_t seed = 0; first.size() < 100'000 || hidden.size() < 100'000; ++seed) {
    core::RngStream rng(seed);
    models::Mlp<double> mlp(5, 128, 4, 3, models::Activation::Sine, omega, rng);
    const auto ps = mlp.parameters();
    for (double v : ps[0]->value.storage()) first.push_back(v);
    for (std::size_t l = 1; l + 1 < ps.size() / 2; ++l) {
      for (double v : ps[2 * l]->value.storage()) hidden.push_back(v);
    }
  }
  const auto check = [](const std::vector<double>& v, double bound) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    EXPECT_GE(*lo, -bound);
    EXPECT_LE(*hi, bound);
    // Uniform over the full interval, not a narrower one.
    EXPECT_LT(*lo, -0.99 * bound);
    EXPECT_GT(*hi, 0.99 * bound);
    std::array<std::size_t, 10> bins{};
    for (double x : v) bins[std::min<std::size_t>(9, static_cast<std::size_t>((x + bound) / (2 * bound) * 10))]++;
    for (std::size_t b : bins) EXPECT_NEAR(static_cast<double>(b) / v.size(), 0.1, 0.01);
  };
  check(first, first_bound);
  check(hidden, hidden_bound);
  EXPECT_DOUBLE_EQ(models::siren_bound(true, 5, omega), first_bound);
  EXPECT_DOUBLE_EQ(models::siren_bound(false, 128, omega), hidden_bound);
}

TEST(PositionalEncoding, Examples) {
  const Tensor<double> zero = models::positional_encode(Tensor<double>({1, 1}), 4);
  EXPECT_EQ(zero.storage(), (std::vector<double>{0, 1, 0, 1, 0, 1, 0, 1}));
  const Tensor<double> one = models::positional_encode(Tensor<double>({1, 1}, 1.0), 1);
  ASSERT_EQ(one.size(), 2u);
  EXPECT_NEAR(one[0], 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(one[1], -1.0);
  const Tensor<double> wide = models::positional_encode(Tensor<double>({7, 5}, 0.3), 10);
  EXPECT_EQ(wide.shape(), (core::Shape{7, 2 * 10 * 5}));
  EXPECT_THROW(models::positional_encode(Tensor<double>({1, 1}), 0), ShapeError);
}

// Independent corner hash and bilinear lookup.
std::uint32_t oracle_hash(std::uint64_t ix, std::uint64_t iy, std::uint64_t t) {
  const std::uint64_t mixed = (iy * 2654435761ull) & 0xffffffffull;
  return static_cast<std::uint32_t>((ix ^ mixed) % t);
}

std::vector<double> oracle_encode(const models::HashGrid<double>& grid, double cx, double cy) {
  const std::size_t f = grid.features();
  std::vector<double> out;
  for (const auto& lv : grid.layout()) {
    const double px = cx * lv.resolution, py = cy * lv.resolution;
    const std::uint32_t ix = std::min<std::uint32_t>(static_cast<std::uint32_t>(std::floor(px)), lv.resolution - 1);
    const std::uint32_t iy = std::min<std::uint32_t>(static_cast<std::uint32_t>(std::floor(py)), lv.resolution - 1);
    const double fx = px - ix, fy = py - iy;
    std::vector<double> acc(f, 0.0);
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const std::uint32_t x = ix + dx, y = iy + dy;
        const std::size_t row = lv.offset + (lv.dense ? std::size_t{y} * (lv.resolution + 1) + x
                                                      : oracle_hash(x, y, grid.table_size()));
        const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy);
        for (std::size_t j = 0; j < f; ++j) acc[j] += w * grid.table().value[row * f + j];
      }
    }
    out.insert(out.end(), acc.begin(), acc.end());
  }
  return out;
}

models::HashGrid<double> default_grid(std::uint64_t seed, bool spread = true) {
  const ArchDescriptor a = ArchDescriptor::hashgrid();
  core::RngStream rng(seed);
  models::HashGrid<double> g(a.hash_levels, a.hash_features, a.hash_log2_table, a.hash_base_resolution,
                             a.hash_per_level_scale, rng);
  // Spread the table so interpolation differences are visible.
  if (spread) {
    for (auto& v : g.table().value.storage()) v = rng.uniform(-1.0, 1.0);
  }
  return g;
}

TEST(HashGrid, LayoutAndSize) {
  const auto grid = default_grid(1);
  EXPECT_EQ(grid.output_dim(), 64u);
  const double bytes = 4.0 * static_cast<double>(grid.table().value.size());
  EXPECT_NEAR(bytes, 128'000.0, 0.05 * 128'000.0);
  bool saw_dense = false, saw_hashed = false;
  for (const auto& lv : grid.layout()) {
    (lv.dense ? saw_dense : saw_hashed) = true;
    EXPECT_EQ(lv.dense, (std::size_t{lv.resolution} + 1) * (lv.resolution + 1) <= grid.table_size());
  }
  EXPECT_TRUE(saw_dense);
  EXPECT_TRUE(saw_hashed);
}

TEST(HashGrid, HashMatchesOracle) {
  core::RngStream rng(5);
  for (int i = 0; i < 100'000; ++i) {
    const auto ix = static_cast<std::uint32_t>(rng.below(1ull << 32));
    const auto iy = static_cast<std::uint32_t>(rng.below(1ull << 32));
    ASSERT_EQ(models::hashgrid_hash(ix, iy, 512), oracle_hash(ix, iy, 512));
  }
}

TEST(HashGrid, EncodeMatchesOracle) {
  const auto grid = default_grid(2);
  core::RngStream rng(6);
  std::vector<std::array<double, 2>> coords = {{0.0, 0.0}, {1.0, 1.0}, {0.5, 0.25}};
  for (int i = 0; i < 200; ++i) coords.push_back({rng.uniform(), rng.uniform()});
  const Tensor<double> enc = grid.encode(grid.lookup(coords));
  for (std::size_t r = 0; r < coords.size(); ++r) {
    const auto ref = oracle_encode(grid, coords[r][0], coords[r][1]);
    for (std::size_t j = 0; j < ref.size(); ++j) ASSERT_NEAR(enc[r * ref.size() + j], ref[j], 1e-12) << r;
  }
}

TEST(HashGrid, CornerCoordinateReturnsTheCornerEntry) {
  const auto grid = default_grid(3);
  const auto& lv0 = grid.layout()[0];
  const std::uint32_t ix = 5, iy = 11;
  const double cx = static_cast<double>(ix) / lv0.resolution, cy = static_cast<double>(iy) / lv0.resolution;
  const Tensor<double> enc = grid.encode(grid.lookup({{cx, cy}}));
  const std::size_t row = lv0.offset + std::size_t{iy} * (lv0.resolution + 1) + ix;
  for (std::size_t j = 0; j < grid.features(); ++j) EXPECT_DOUBLE_EQ(enc[j], grid.table().value[row * grid.features() + j]);
}

TEST(HashGrid, ContinuousInCoordinates) {
  const auto grid = default_grid(4, false);
  core::RngStream rng(8);
  for (int i = 0; i < 500; ++i) {
    const double cx = rng.uniform(0.01, 0.99), cy = rng.uniform(0.01, 0.99);
    const Tensor<double> a = grid.encode(grid.lookup({{cx, cy}}));
    const Tensor<double> b = grid.encode(grid.lookup({{cx + 1e-6, cy - 1e-6}}));
    for (std::size_t j = 0; j < a.size(); ++j) ASSERT_LT(std::abs(a[j] - b[j]), 1e-3);
  }
}

}  // namespace
