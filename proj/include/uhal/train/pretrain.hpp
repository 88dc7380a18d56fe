#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "uhal/models/recovery_model.hpp"
#include "uhal/train/config.hpp"
#include "uhal/train/sample.hpp"

namespace uhal::train {

struct PretrainResult {
  // Mean batch loss per optimizer step.
  std::vector<double> loss_history;
  std::uint64_t steps = 0;
  double seconds = 0.0;
  bool stopped_by_budget = false;
};

using StepCallback = std::function<void(std::uint64_t step, double loss)>;

// Trains encoding and head jointly on random crops with the reconstruction
// loss ||x - (y - residual)||^2. Throws DataError on an empty dataset or a
// pair with mismatched shapes.
PretrainResult pretrain(models::RecoveryModel<float>& model, const std::vector<PairedSample>& data,
                        const TrainConfig& cfg, const StepCallback& on_step = {});

// Mean of the first and last `window` entries.
double windowed_mean(const std::vector<double>& values, std::size_t window, bool from_end);

}  // namespace uhal::train
