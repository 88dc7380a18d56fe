#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "uhal/models/recovery_model.hpp"
#include "uhal/train/config.hpp"
#include "uhal/train/sample.hpp"

namespace uhal::train {

struct TraceRow {
  std::uint64_t iteration = 0;
  double loss = 0.0;
  double psnr = 0.0;
};

struct FinetuneResult {
  // Row 0 is the starting point (iteration 0, before any update).
  std::vector<TraceRow> trace;
  double psnr_start = 0.0;
  double psnr_end = 0.0;
  std::uint64_t iterations_run = 0;
  // Distinct pixel batches drawn.
  std::uint64_t batches_drawn = 0;
  // Optimization wall-clock time, excluding PSNR evaluation.
  double seconds = 0.0;
  bool stopped_by_budget = false;
  // Iteration whose weights were kept.
  std::uint64_t kept_iteration = 0;
};

// Optimizes the head (and, for hash grids, the table) on one pair. A conv
// encoder is never written. With cfg.sampling == Mask, `mask` selects the
// pixels to draw from (one byte per pixel, non-zero = flagged).
FinetuneResult finetune(models::RecoveryModel<float>& model, const PairedSample& pair, const TrainConfig& cfg,
                        const std::vector<std::uint8_t>* mask = nullptr);

// Clamped recovery PSNR against x.
double recovery_psnr(const models::RecoveryModel<float>& model, const PairedSample& pair);

// iteration,loss,psnr
void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows);
void write_loss_csv(std::ostream& os, const std::vector<double>& losses);

}  // namespace uhal::train
