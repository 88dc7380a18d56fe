#include "uhal/train/finetune.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "uhal/core/adam.hpp"
#include "uhal/core/error.hpp"
#include "uhal/core/ops.hpp"
#include "uhal/train/metrics.hpp"
#include "uhal/train/sampling.hpp"

namespace uhal::train {

namespace ops = core::ops;
using Clock = std::chrono::steady_clock;

namespace {

core::Tensor<float> gather(const core::Tensor<float>& img, const std::vector<std::uint32_t>& pixels) {
  core::Tensor<float> out({pixels.size(), 3});
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) out[i * 3 + c] = img[static_cast<std::size_t>(pixels[i]) * 3 + c];
  }
  return out;
}

PixelSampler make_sampler(const PairedSample& pair, const TrainConfig& cfg, const std::vector<std::uint8_t>* mask) {
  const std::size_t n = pair.x.dim(0) * pair.x.dim(1);
  switch (cfg.sampling) {
    case SamplingMode::Uniform:
      return PixelSampler::uniform(n);
    case SamplingMode::ErrorWeighted:
      return PixelSampler::weighted(error_weights(pair.x, pair.y, cfg.error_epsilon));
    case SamplingMode::Mask: {
      if (!mask || mask->size() != n) throw DataError("finetune: mask sampling needs a mask with one entry per pixel");
      std::vector<double> w(n);
      for (std::size_t i = 0; i < n; ++i) w[i] = (*mask)[i] ? 1.0 : 0.0;
      return PixelSampler::weighted(w);
    }
  }
  return PixelSampler::uniform(n);
}

double full_psnr(const models::RecoveryModel<float>& model, const models::PixelFeatures<float>& f,
                 const core::Tensor<float>& x) {
  return psnr(clamp01(model.recover(f)), x);
}

}  // namespace

double recovery_psnr(const models::RecoveryModel<float>& model, const PairedSample& pair) {
  return psnr(clamp01(model.recover(pair.y)), pair.x);
}

FinetuneResult finetune(models::RecoveryModel<float>& model, const PairedSample& pair, const TrainConfig& cfg,
                        const std::vector<std::uint8_t>* mask) {
  cfg.validate();
  if (pair.x.shape() != pair.y.shape() || pair.x.rank() != 3 || pair.x.dim(2) != 3) {
    throw ShapeError("finetune: x " + core::shape_str(pair.x.shape()) + " and y " + core::shape_str(pair.y.shape()) +
                     " must both be H x W x 3");
  }
  const bool train_encoding = model.arch().has_hashgrid();
  std::vector<core::Parameter<float>*> params = model.head_parameters();
  if (train_encoding) {
    for (auto* p : model.encoding_parameters()) params.push_back(p);
  }
  for (auto* p : params) p->zero_grad();

  const models::PixelFeatures<float> feats = model.prepare(pair.y);
  const PixelSampler sampler = make_sampler(pair, cfg, mask);
  core::AdamState<float> adam(static_cast<float>(cfg.finetune_lr));

  FinetuneResult res;
  res.psnr_start = full_psnr(model, feats, pair.x);
  res.trace.push_back({0, std::nan(""), res.psnr_start});

  double best = res.psnr_start;
  std::vector<core::Tensor<float>> best_values;
  auto remember = [&] {
    best_values.clear();
    for (auto* p : params) best_values.push_back(p->value);
  };
  if (cfg.keep_best) remember();

  double opt_seconds = 0.0;
  std::uint64_t last_key = ~std::uint64_t{0};
  std::vector<std::uint32_t> pixels;
  core::Tensor<float> xb, yb;
  double last_loss = std::nan("");
  double last_psnr = res.psnr_start;

  for (std::uint64_t it = 0; it < cfg.iterations; ++it) {
    if (cfg.time_budget_seconds > 0 && opt_seconds >= cfg.time_budget_seconds) {
      res.stopped_by_budget = true;
      break;
    }
    const auto t0 = Clock::now();
    const std::uint64_t key = batch_key(it, cfg.sample_every_p);
    if (key != last_key) {
      pixels = sampler.draw(cfg.batch_pixels, cfg.seed, it, cfg.sample_every_p);
      xb = gather(pair.x, pixels);
      yb = gather(pair.y, pixels);
      last_key = key;
      ++res.batches_drawn;
    }
    core::Graph<float> g;
    const auto r = model.residual_rows(g, feats, pixels, true, train_encoding);
    const auto yn = g.constant(yb);
    const auto loss = ops::mse_loss(g, ops::sub(g, yn, r), g.constant(xb));
    last_loss = g.value(loss)[0];
    g.backward(loss);
    adam.step(params);
    for (auto* p : params) p->zero_grad();
    opt_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
    res.iterations_run = it + 1;

    const bool last = it + 1 == cfg.iterations;
    if ((it + 1) % cfg.trace_every == 0 || last) {
      last_psnr = full_psnr(model, feats, pair.x);
      res.trace.push_back({it + 1, last_loss, last_psnr});
      if (cfg.keep_best && last_psnr > best) {
        best = last_psnr;
        res.kept_iteration = it + 1;
        remember();
      }
    }
  }
  if (res.trace.back().iteration != res.iterations_run) {
    last_psnr = full_psnr(model, feats, pair.x);
    res.trace.push_back({res.iterations_run, last_loss, last_psnr});
    if (cfg.keep_best && last_psnr > best) {
      best = last_psnr;
      res.kept_iteration = res.iterations_run;
      remember();
    }
  }
  if (cfg.keep_best && res.kept_iteration != res.iterations_run) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
    last_psnr = best;
  } else if (!cfg.keep_best) {
    res.kept_iteration = res.iterations_run;
  }
  res.psnr_end = last_psnr;
  res.seconds = opt_seconds;
  return res;
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows) {
  os << "iteration,loss,psnr\n";
  for (const auto& r : rows) {
    os << r.iteration << ',';
    if (!std::isnan(r.loss)) os << r.loss;
    os << ',' << r.psnr << '\n';
  }
}

void write_loss_csv(std::ostream& os, const std::vector<double>& losses) {
  os << "iteration,loss,psnr\n";
  for (std::size_t i = 0; i < losses.size(); ++i) os << i << ',' << losses[i] << ",\n";
}

}  // namespace uhal::train
