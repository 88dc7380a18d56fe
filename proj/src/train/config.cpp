#include "uhal/train/config.hpp"

#include <array>

#include "uhal/core/error.hpp"

namespace uhal::train {

namespace {

constexpr std::array kKeys = {"phase",         "epochs",         "iterations",   "batch_images", "batch_pixels",
                              "lr",            "lr_final",       "lr_drop_fraction", "finetune_lr", "sample_every_p",
                              "seed",          "time_budget_seconds", "crop_size", "sampling",     "mask_threshold",
                              "error_epsilon", "trace_every",    "keep_best"};

Phase parse_phase(const std::string& s) {
  if (s == "pretrain") return Phase::Pretrain;
  if (s == "finetune") return Phase::Finetune;
  throw DataError("unknown phase '" + s + "'");
}

SamplingMode parse_sampling(const std::string& s) {
  if (s == "uniform") return SamplingMode::Uniform;
  if (s == "error_weighted") return SamplingMode::ErrorWeighted;
  if (s == "mask") return SamplingMode::Mask;
  throw DataError("unknown sampling mode '" + s + "'");
}

}  // namespace

std::string to_string(Phase p) { return p == Phase::Pretrain ? "pretrain" : "finetune"; }

std::string to_string(SamplingMode m) {
  switch (m) {
    case SamplingMode::Uniform: return "uniform";
    case SamplingMode::ErrorWeighted: return "error_weighted";
    case SamplingMode::Mask: return "mask";
  }
  return "uniform";
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& m) { throw DataError("train config: " + m); };
  if (batch_images == 0) bad("batch_images must be positive");
  if (batch_pixels == 0) bad("batch_pixels must be positive");
  if (sample_every_p == 0) bad("sample_every_p must be >= 1");
  if (trace_every == 0) bad("trace_every must be >= 1");
  if (crop_size == 0) bad("crop_size must be positive");
  if (lr < 0 || lr_final < 0 || finetune_lr < 0) bad("learning rates must be non-negative");
  if (lr_drop_fraction < 0 || lr_drop_fraction > 1) bad("lr_drop_fraction must be in [0, 1]");
  if (time_budget_seconds < 0) bad("time_budget_seconds must be non-negative");
  if (!(mask_threshold > 0)) bad("mask_threshold must be positive");
  if (error_epsilon < 0) bad("error_epsilon must be non-negative");
}

nlohmann::json to_json(const TrainConfig& c) {
  return nlohmann::json{{"phase", to_string(c.phase)},
                        {"epochs", c.epochs},
                        {"iterations", c.iterations},
                        {"batch_images", c.batch_images},
                        {"batch_pixels", c.batch_pixels},
                        {"lr", c.lr},
                        {"lr_final", c.lr_final},
                        {"lr_drop_fraction", c.lr_drop_fraction},
                        {"finetune_lr", c.finetune_lr},
                        {"sample_every_p", c.sample_every_p},
                        {"seed", c.seed},
                        {"time_budget_seconds", c.time_budget_seconds},
                        {"crop_size", c.crop_size},
                        {"sampling", to_string(c.sampling)},
                        {"mask_threshold", c.mask_threshold},
                        {"error_epsilon", c.error_epsilon},
                        {"trace_every", c.trace_every},
                        {"keep_best", c.keep_best}};
}

bool is_train_config_key(const std::string& key) {
  for (const char* k : kKeys) {
    if (key == k) return true;
  }
  return false;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw DataError("train config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "phase") c.phase = parse_phase(v.get<std::string>());
      else if (key == "epochs") c.epochs = v.get<std::uint64_t>();
      else if (key == "iterations") c.iterations = v.get<std::uint64_t>();
      else if (key == "batch_images") c.batch_images = v.get<std::size_t>();
      else if (key == "batch_pixels") c.batch_pixels = v.get<std::size_t>();
      else if (key == "lr") c.lr = v.get<double>();
      else if (key == "lr_final") c.lr_final = v.get<double>();
      else if (key == "lr_drop_fraction") c.lr_drop_fraction = v.get<double>();
      else if (key == "finetune_lr") c.finetune_lr = v.get<double>();
      else if (key == "sample_every_p") c.sample_every_p = v.get<std::uint64_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "time_budget_seconds") c.time_budget_seconds = v.get<double>();
      else if (key == "crop_size") c.crop_size = v.get<std::size_t>();
      else if (key == "sampling") c.sampling = parse_sampling(v.get<std::string>());
      else if (key == "mask_threshold") c.mask_threshold = v.get<double>();
      else if (key == "error_epsilon") c.error_epsilon = v.get<double>();
      else if (key == "trace_every") c.trace_every = v.get<std::uint64_t>();
      else if (key == "keep_best") c.keep_best = v.get<bool>();
      else throw DataError("unknown config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw DataError("config key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

void apply_override(TrainConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw DataError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  cfg = train_config_from_json(nlohmann::json{{key, value}}, cfg);
}

}  // namespace uhal::train
