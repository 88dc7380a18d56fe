#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

namespace uhal::train {

enum class Phase { Pretrain, Finetune };
enum class SamplingMode { Uniform, ErrorWeighted, Mask };

struct TrainConfig {
  Phase phase = Phase::Pretrain;
  // Pretraining length; one epoch is ceil(dataset / batch_images) steps.
  std::uint64_t epochs = 200;
  // Finetuning length.
  std::uint64_t iterations = 1000;
  std::size_t batch_images = 32;
  std::size_t batch_pixels = 65536;
  double lr = 1e-4;
  double lr_final = 1e-5;
  // Fraction of pretraining epochs after which lr drops to lr_final.
  double lr_drop_fraction = 0.8;
  double finetune_lr = 1e-3;
  // A fresh pixel batch is drawn every p iterations.
  std::uint64_t sample_every_p = 1;
  std::uint64_t seed = 0;
  // Wall-clock cap on the optimization loop; 0 disables it.
  double time_budget_seconds = 0.0;
  // Square pretraining crop edge, clipped to the image size.
  std::size_t crop_size = 64;
  SamplingMode sampling = SamplingMode::Uniform;
  double mask_threshold = 0.02;
  double error_epsilon = 1e-4;
  // Full-image PSNR is evaluated every trace_every finetune iterations and
  // after the last one.
  std::uint64_t trace_every = 1;
  // Finetuning returns the best traced iterate rather than the last one.
  bool keep_best = true;

  void validate() const;
};

std::string to_string(Phase p);
std::string to_string(SamplingMode m);

nlohmann::json to_json(const TrainConfig& cfg);
// Applies the keys present in j on top of base. Unknown keys throw DataError.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
bool is_train_config_key(const std::string& key);
// "key=value"; the value is parsed as JSON when possible, else taken as a string.
void apply_override(TrainConfig& cfg, const std::string& assignment);

}  // namespace uhal::train
