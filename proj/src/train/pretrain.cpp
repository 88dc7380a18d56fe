#include "uhal/train/pretrain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "uhal/core/adam.hpp"
#include "uhal/core/error.hpp"
#include "uhal/core/ops.hpp"
#include "uhal/core/rng.hpp"

namespace uhal::train {

namespace ops = core::ops;

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348;
constexpr std::uint64_t kCropStream = 0x4352;

core::Tensor<float> crop(const core::Tensor<float>& img, std::size_t top, std::size_t left, std::size_t h,
                         std::size_t w) {
  core::Tensor<float> out({h, w, 3});
  for (std::size_t r = 0; r < h; ++r) {
    std::copy_n(img.ptr() + ((top + r) * img.dim(1) + left) * 3, w * 3, out.ptr() + r * w * 3);
  }
  return out;
}

void check_pair(const PairedSample& p) {
  if (p.x.shape() != p.y.shape() || p.x.rank() != 3 || p.x.dim(2) != 3) {
    throw DataError("pair '" + p.id + "': x " + core::shape_str(p.x.shape()) + " and y " +
                    core::shape_str(p.y.shape()) + " must both be H x W x 3");
  }
}

}  // namespace

double windowed_mean(const std::vector<double>& values, std::size_t window, bool from_end) {
  if (values.empty()) return 0.0;
  const std::size_t n = std::min(window, values.size());
  const auto begin = from_end ? values.end() - static_cast<std::ptrdiff_t>(n) : values.begin();
  return std::accumulate(begin, begin + static_cast<std::ptrdiff_t>(n), 0.0) / static_cast<double>(n);
}

PretrainResult pretrain(models::RecoveryModel<float>& model, const std::vector<PairedSample>& data,
                        const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  if (data.empty()) throw DataError("pretrain: dataset is empty");
  for (const auto& p : data) check_pair(p);

  const std::size_t n = data.size();
  const std::size_t batch = std::min(cfg.batch_images, n);
  const std::uint64_t steps_per_epoch = (n + batch - 1) / batch;
  const auto drop_epoch = static_cast<std::uint64_t>(std::floor(cfg.lr_drop_fraction * static_cast<double>(cfg.epochs)));

  auto params = model.parameters();
  core::AdamState<float> adam(static_cast<float>(cfg.lr));
  const core::CounterRng root(cfg.seed);
  PretrainResult result;
  const auto t0 = std::chrono::steady_clock::now();

  for (std::uint64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    adam.set_learning_rate(static_cast<float>(epoch < drop_epoch ? cfg.lr : cfg.lr_final));
    // Fisher-Yates driven by the counter generator, keyed by epoch.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const core::CounterRng shuffle = root.split(kShuffleStream).split(epoch);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i, i)]);

    for (std::uint64_t s = 0; s < steps_per_epoch; ++s) {
      const std::size_t first = s * batch;
      const std::size_t count = std::min(batch, n - first);
      for (auto* p : params) p->zero_grad();
      double batch_loss = 0.0;
      for (std::size_t b = 0; b < count; ++b) {
        const std::size_t idx = order[first + b];
        const PairedSample& pair = data[idx];
        const std::size_t h = pair.x.dim(0), w = pair.x.dim(1);
        const std::size_t ch = std::min(cfg.crop_size, h), cw = std::min(cfg.crop_size, w);
        const core::CounterRng crop_rng = root.split(kCropStream).split(result.steps).split(b);
        const std::size_t top = h > ch ? crop_rng.below(0, h - ch + 1) : 0;
        const std::size_t left = w > cw ? crop_rng.below(1, w - cw + 1) : 0;

        core::Graph<float> g;
        const auto yc = g.constant(crop(pair.y, top, left, ch, cw));
        const auto xc = g.constant(crop(pair.x, top, left, ch, cw));
        const auto res = model.residual_map(g, yc, h, w, top, left, true);
        const auto loss = ops::mse_loss(g, ops::sub(g, yc, res), xc);
        batch_loss += g.value(loss)[0];
        // Per-image losses are averaged over the batch.
        const auto scaled = ops::scale(g, loss, 1.0f / static_cast<float>(count));
        g.backward(scaled);
      }
      for (auto* p : params) {
        if (p->grad.empty()) p->grad = core::Tensor<float>(p->value.shape());
      }
      adam.step(params);
      batch_loss /= static_cast<double>(count);
      result.loss_history.push_back(batch_loss);
      if (on_step) on_step(result.steps, batch_loss);
      ++result.steps;

      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (cfg.time_budget_seconds > 0 && elapsed >= cfg.time_budget_seconds) {
        result.stopped_by_budget = true;
        result.seconds = elapsed;
        return result;
      }
    }
  }
  for (auto* p : params) p->zero_grad();
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace uhal::train
