#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <sstream>

#include "uhal/codec/container.hpp"
#include "uhal/core/error.hpp"
#include "uhal/core/ops.hpp"
#include "uhal/core/parallel.hpp"
#include "uhal/data/dataset.hpp"
#include "uhal/train/config.hpp"
#include "uhal/train/finetune.hpp"
#include "uhal/train/metrics.hpp"
#include "uhal/train/pretrain.hpp"
#include "uhal/train/sampling.hpp"

namespace {

using namespace uhal;
using core::Tensor;
using models::ArchDescriptor;
using models::RecoveryModel;
using train::PairedSample;
using train::TrainConfig;

// Critical value of chi-square with 3 degrees of freedom at alpha = 0.001.
constexpr double kChiSquare3dfAlpha001 = 16.266;

double chi_square(const std::vector<std::size_t>& counts) {
  double total = 0;
  for (auto c : counts) total += static_cast<double>(c);
  const double e = total / static_cast<double>(counts.size());
  double chi = 0;
  for (auto c : counts) chi += (static_cast<double>(c) - e) * (static_cast<double>(c) - e) / e;
  return chi;
}

std::vector<std::size_t> histogram(const std::vector<std::uint32_t>& s, std::size_t cells) {
  std::vector<std::size_t> h(cells, 0);
  for (auto i : s) ++h.at(i);
  return h;
}

std::vector<PairedSample> synth_pairs(std::size_t n, std::size_t size, std::uint64_t seed) {
  return data::synth_dataset(n, size, size, {data::SynthMode::DetailInject, 0.5f, 0}, seed).pairs;
}

std::uint32_t encoder_hash(const RecoveryModel<float>& m) {
  std::vector<std::uint8_t> bytes;
  for (const auto& t : m.export_weights().encoding) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.value.ptr());
    bytes.insert(bytes.end(), p, p + t.value.size() * sizeof(float));
  }
  return codec::crc32(bytes);
}

TrainConfig finetune_cfg(std::uint64_t iterations) {
  TrainConfig cfg;
  cfg.phase = train::Phase::Finetune;
  cfg.iterations = iterations;
  cfg.batch_pixels = 1024;
  cfg.trace_every = 50;
  return cfg;
}

TEST(Metrics, PsnrExamples) {
  const Tensor<float> a({4, 4, 3}, 0.5f);
  EXPECT_EQ(train::psnr(a, a), train::kPsnrInfinity);
  const Tensor<double> x({4, 4, 3}, 0.2), y({4, 4, 3}, 0.3);
  EXPECT_NEAR(train::mse(x, y), 0.01, 1e-15);
  EXPECT_NEAR(train::psnr(x, y), 20.0, 1e-9);
  Tensor<double> half({2, 2, 3}, 0.0), zero({2, 2, 3}, 0.0);
  for (std::size_t i = 0; i < 6; ++i) half[i] = 0.2;
  EXPECT_NEAR(train::mse(half, zero), 0.02, 1e-15);
  EXPECT_NEAR(train::psnr(half, zero), 16.9897, 1e-4);
  EXPECT_THROW(train::psnr(Tensor<double>({2, 2, 3}), Tensor<double>({2, 3, 3})), ShapeError);
}

TEST(Sampling, ReusesBatchesEveryP) {
  const auto a = train::sample_pixels(8, 8, 16, 3, 0, 2);
  const auto b = train::sample_pixels(8, 8, 16, 3, 1, 2);
  const auto c = train::sample_pixels(8, 8, 16, 3, 2, 2);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_NE(train::sample_pixels(8, 8, 16, 3, 0, 1), train::sample_pixels(8, 8, 16, 4, 0, 1));
  for (auto p : c) EXPECT_LT(p, 64u);
  EXPECT_THROW(train::sample_pixels(8, 8, 0, 3, 0, 1), ShapeError);
}

TEST(Sampling, UniformPassesChiSquare) {
  const auto s = train::sample_pixels(2, 2, 1'000'000, 11, 0, 1);
  EXPECT_LT(chi_square(histogram(s, 4)), kChiSquare3dfAlpha001);
}

Tensor<float> two_pixel(float r0, float r1, Tensor<float>* y) {
  Tensor<float> x({1, 2, 3}, 0.5f);
  *y = x;
  for (std::size_t c = 0; c < 3; ++c) {
    y->at(0, 0, c) += r0;
    y->at(0, 1, c) -= r1;
  }
  return x;
}

TEST(Sampling, ErrorWeightedThreeToOne) {
  Tensor<float> y;
  const Tensor<float> x = two_pixel(0.3f, 0.1f, &y);
  const auto s = train::error_weighted_sample(x, y, 100'000, 5);
  const auto h = histogram(s, 2);
  const double ratio = static_cast<double>(h[0]) / static_cast<double>(h[1]);
  EXPECT_NEAR(ratio, 3.0, 0.05 * 3.0);
}

TEST(Sampling, ErrorWeightedConcentratesOnSingleErrorPixel) {
  Tensor<float> x({3, 3, 3}, 0.4f), y = x;
  y.at(1, 2, 0) = 0.9f;
  const auto s = train::error_weighted_sample(x, y, 5000, 1, 0.0);
  for (auto p : s) ASSERT_EQ(p, 1u * 3 + 2);
}

TEST(Sampling, ErrorWeightedUniformResidualIsUniform) {
  Tensor<float> x({2, 2, 3}, 0.4f), y({2, 2, 3}, 0.6f);
  EXPECT_LT(chi_square(histogram(train::error_weighted_sample(x, y, 200'000, 2), 4)), kChiSquare3dfAlpha001);
  // All-zero residual without epsilon falls back to uniform.
  EXPECT_LT(chi_square(histogram(train::error_weighted_sample(x, x, 200'000, 3, 0.0), 4)), kChiSquare3dfAlpha001);
}

TEST(Config, JsonRoundTripAndStrictKeys) {
  TrainConfig cfg;
  cfg.epochs = 7;
  cfg.sampling = train::SamplingMode::ErrorWeighted;
  cfg.sample_every_p = 25;
  const TrainConfig back = train::train_config_from_json(train::to_json(cfg));
  EXPECT_EQ(train::to_json(back), train::to_json(cfg));
  nlohmann::json j = train::to_json(cfg);
  j["learning_rate_typo"] = 1;
  EXPECT_THROW(train::train_config_from_json(j), DataError);
  train::apply_override(cfg, "batch_pixels=128");
  train::apply_override(cfg, "sampling=mask");
  EXPECT_EQ(cfg.batch_pixels, 128u);
  EXPECT_EQ(cfg.sampling, train::SamplingMode::Mask);
  EXPECT_THROW(train::apply_override(cfg, "nope=1"), DataError);
  EXPECT_THROW(train::apply_override(cfg, "batch_pixels"), DataError);
}

// One pretraining run shared by the tests that need a trained model.
class Pretrained : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = std::make_unique<std::vector<PairedSample>>(synth_pairs(8, 32, 100));
    model_ = std::make_unique<RecoveryModel<float>>(ArchDescriptor::ours(64), 0);
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_images = 8;
    cfg.lr = 1e-3;
    cfg.lr_final = 1e-4;
    result_ = std::make_unique<train::PretrainResult>(train::pretrain(*model_, *data_, cfg));
  }
  static void TearDownTestSuite() {
    data_.reset();
    model_.reset();
    result_.reset();
  }

  static std::unique_ptr<std::vector<PairedSample>> data_;
  static std::unique_ptr<RecoveryModel<float>> model_;
  static std::unique_ptr<train::PretrainResult> result_;
};

std::unique_ptr<std::vector<PairedSample>> Pretrained::data_;
std::unique_ptr<RecoveryModel<float>> Pretrained::model_;
std::unique_ptr<train::PretrainResult> Pretrained::result_;

TEST_F(Pretrained, LossHalvesOver200Epochs) {
  ASSERT_EQ(result_->steps, 200u);
  const double first = train::windowed_mean(result_->loss_history, 10, false);
  const double last = train::windowed_mean(result_->loss_history, 10, true);
  EXPECT_LT(last, 0.5 * first) << "initial " << first << " final " << last;
}

TEST_F(Pretrained, FinetuneGainsOverZeroShotAndKeepsEncoder) {
  const auto test = synth_pairs(1, 64, 900)[0];
  RecoveryModel<float> m = *model_;
  const std::uint32_t before = encoder_hash(m);
  const double zero_shot = train::recovery_psnr(m, test);
  const auto r = train::finetune(m, test, finetune_cfg(1000));
  EXPECT_EQ(encoder_hash(m), before);
  EXPECT_EQ(r.iterations_run, 1000u);
  EXPECT_GE(r.psnr_end, r.psnr_start);
  EXPECT_DOUBLE_EQ(r.psnr_start, zero_shot);
  EXPECT_GE(train::recovery_psnr(m, test), zero_shot + 1.0);
  EXPECT_DOUBLE_EQ(train::recovery_psnr(m, test), r.psnr_end);
}

TEST_F(Pretrained, WindowedPsnrRisesMonotonically) {
  const auto test = synth_pairs(1, 64, 901)[0];
  RecoveryModel<float> m = *model_;
  TrainConfig cfg = finetune_cfg(400);
  cfg.trace_every = 1;
  const auto r = train::finetune(m, test, cfg);
  ASSERT_EQ(r.trace.size(), 401u);
  double prev = -1e9;
  for (std::size_t w = 1; w + 50 <= r.trace.size(); w += 50) {
    double sum = 0;
    for (std::size_t i = w; i < w + 50; ++i) sum += r.trace[i].psnr;
    const double mean = sum / 50.0;
    EXPECT_GE(mean, prev) << "window starting at " << w;
    prev = mean;
  }
}

TEST_F(Pretrained, LossIsBatchMse) {
  const auto test = synth_pairs(1, 40, 902)[0];
  RecoveryModel<float> m = *model_;
  TrainConfig cfg = finetune_cfg(6);
  cfg.finetune_lr = 0.0;
  cfg.batch_pixels = 300;
  cfg.trace_every = 1;
  cfg.seed = 4;
  const auto r = train::finetune(m, test, cfg);
  const auto f = m.prepare(test.y);
  for (std::size_t t = 1; t < r.trace.size(); ++t) {
    const auto pixels = train::sample_pixels(40, 40, 300, cfg.seed, t - 1, 1);
    std::vector<models::PixelIndex> idx;
    for (auto p : pixels) idx.push_back({p / 40, p % 40});
    const Tensor<float> xh = m.decode_recover(f, idx);
    double se = 0;
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = xh[i * 3 + c] - test.x[pixels[i] * 3 + c];
        se += d * d;
      }
    }
    EXPECT_NEAR(r.trace[t].loss, se / (pixels.size() * 3.0), 1e-6 * (1 + r.trace[t].loss)) << t;
  }
}

TEST(Pretrain, LrZeroControlIsFlat) {
  const auto data = synth_pairs(8, 32, 100);
  RecoveryModel<float> m(ArchDescriptor::ours(64), 0);
  const auto before = m.export_weights();
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_images = 8;
  cfg.lr = 0.0;
  cfg.lr_final = 0.0;
  const auto r = train::pretrain(m, data, cfg);
  for (double l : r.loss_history) EXPECT_EQ(l, r.loss_history.front());
  EXPECT_EQ(m.export_weights(), before);
}

TEST(Pretrain, NoEncoderVariantTrainsOnlyTheHead) {
  const auto data = synth_pairs(4, 16, 7);
  RecoveryModel<float> m(ArchDescriptor::ours(0), 0);
  EXPECT_EQ(m.encoder(), nullptr);
  EXPECT_TRUE(m.encoding_parameters().empty());
  const auto before = m.export_weights();
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.lr = 1e-3;
  train::pretrain(m, data, cfg);
  EXPECT_TRUE(m.export_weights().encoding.empty());
  EXPECT_NE(m.export_weights().head, before.head);
}

TEST(Pretrain, AcceptsMixedModalities) {
  auto data = synth_pairs(4, 16, 8);
  data[0].modality = "natural_sr";
  data[1].modality = "lowlight";
  RecoveryModel<float> m(ArchDescriptor::ours(64), 0);
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_EQ(train::pretrain(m, data, cfg).steps, 1u);
}

TEST(Pretrain, RejectsEmptyAndMismatchedData) {
  RecoveryModel<float> m(ArchDescriptor::ours(64), 0);
  EXPECT_THROW(train::pretrain(m, {}, TrainConfig{}), DataError);
  auto data = synth_pairs(1, 16, 8);
  data[0].y = Tensor<float>({16, 15, 3});
  EXPECT_THROW(train::pretrain(m, data, TrainConfig{}), DataError);
}

TEST(Finetune, LrZeroLeavesWeightsAndTraceConstant) {
  const auto pair = synth_pairs(1, 32, 3)[0];
  RecoveryModel<float> m(ArchDescriptor::ours(64), 1);
  const auto before = m.export_weights();
  TrainConfig cfg = finetune_cfg(100);
  cfg.finetune_lr = 0.0;
  cfg.trace_every = 10;
  const auto r = train::finetune(m, pair, cfg);
  EXPECT_EQ(m.export_weights(), before);
  for (const auto& row : r.trace) EXPECT_EQ(row.psnr, r.psnr_start);
}

TEST(Finetune, EveryPDrawsCeilBatches) {
  const auto pair = synth_pairs(1, 16, 3)[0];
  RecoveryModel<float> m(ArchDescriptor::ours(64), 1);
  TrainConfig cfg = finetune_cfg(1000);
  cfg.batch_pixels = 32;
  cfg.sample_every_p = 25;
  cfg.trace_every = 1000;
  EXPECT_EQ(train::finetune(m, pair, cfg).batches_drawn, 40u);
  cfg.sample_every_p = 30;
  cfg.iterations = 100;
  EXPECT_EQ(train::finetune(m, pair, cfg).batches_drawn, 4u);
}

TEST(Finetune, HonorsTimeBudget) {
  const auto pair = synth_pairs(1, 32, 3)[0];
  RecoveryModel<float> m(ArchDescriptor::ours(64), 1);
  TrainConfig cfg = finetune_cfg(10'000'000);
  cfg.time_budget_seconds = 0.3;
  cfg.trace_every = 100'000'000;
  const auto r = train::finetune(m, pair, cfg);
  EXPECT_TRUE(r.stopped_by_budget);
  EXPECT_LT(r.iterations_run, 10'000'000u);
  EXPECT_GE(r.seconds, 0.3);
  EXPECT_LT(r.seconds, 1.0);
}

TEST(Finetune, RejectsShapeMismatch) {
  RecoveryModel<float> m(ArchDescriptor::ours(64), 1);
  PairedSample p{Tensor<float>({16, 16, 3}), Tensor<float>({16, 17, 3}), "bad", "custom"};
  EXPECT_THROW(train::finetune(m, p, finetune_cfg(1)), ShapeError);
}

TEST(Finetune, HashgridTrainsTable) {
  const auto pair = synth_pairs(1, 32, 5)[0];
  RecoveryModel<float> m(ArchDescriptor::hashgrid(), 1);
  const auto before = m.export_weights();
  const auto r = train::finetune(m, pair, finetune_cfg(100));
  EXPECT_GT(r.psnr_end, r.psnr_start);
  EXPECT_NE(m.export_weights().encoding, before.encoding);
}

TEST(Finetune, MaskRestrictedSamplingRuns) {
  const auto pair = synth_pairs(1, 32, 5)[0];
  RecoveryModel<float> m(ArchDescriptor::ours(64), 1);
  std::vector<std::uint8_t> mask(32 * 32, 0);
  for (std::size_t i = 0; i < mask.size(); i += 3) mask[i] = 1;
  TrainConfig cfg = finetune_cfg(50);
  cfg.sampling = train::SamplingMode::Mask;
  const auto r = train::finetune(m, pair, cfg, &mask);
  EXPECT_TRUE(std::isfinite(r.psnr_end));
  EXPECT_THROW(train::finetune(m, pair, cfg, nullptr), DataError);
}

TEST(Determinism, SameSeedSameWeightsAcrossThreadCounts) {
  const auto data = synth_pairs(3, 24, 12);
  const std::size_t saved = core::thread_count();
  auto run = [&](std::size_t threads) {
    core::set_thread_count(threads);
    RecoveryModel<float> m(ArchDescriptor::ours(64), 3);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_images = 2;
    cfg.lr = 1e-3;
    const auto pr = train::pretrain(m, data, cfg);
    train::finetune(m, data[0], finetune_cfg(30));
    return std::make_pair(m.export_weights(), pr.loss_history);
  };
  const auto ref = run(1);
  for (std::size_t t : {1u, 2u, 8u}) {
    const auto other = run(t);
    EXPECT_TRUE(other.first == ref.first) << t << " threads";
    EXPECT_EQ(other.second, ref.second) << t << " threads";
  }
  core::set_thread_count(saved);
}

TEST(TraceCsv, HeaderAndRows) {
  std::ostringstream os;
  train::write_trace_csv(os, {{0, std::nan(""), 20.5}, {10, 0.01, 21.0}});
  EXPECT_EQ(os.str(), "iteration,loss,psnr\n0,,20.5\n10,0.01,21\n");
}

}  // namespace
