#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace uhal::models {

enum class Family : std::uint8_t { EncoderMlp = 0, Siren = 1, NerfPe = 2, HashGrid = 3 };
enum class InputMode : std::uint8_t { Xy = 0, XyRgb = 1, LatentXy = 2, LatentOnly = 3 };
enum class EncoderKind : std::uint8_t { Naf = 0, Base = 1 };

std::string to_string(Family f);
std::string to_string(InputMode m);
std::string to_string(EncoderKind k);
Family parse_family(const std::string& s);
InputMode parse_input_mode(const std::string& s);
EncoderKind parse_encoder_kind(const std::string& s);

// Every hyperparameter needed to rebuild a model's parameter layout.
struct ArchDescriptor {
  static constexpr std::uint8_t kVersion = 1;

  Family family = Family::EncoderMlp;
  EncoderKind encoder_kind = EncoderKind::Naf;
  std::uint32_t k = 64;
  std::uint32_t encoder_width = 18;
  std::uint32_t encoder_blocks = 1;
  std::uint32_t mlp_hidden = 64;
  std::uint32_t mlp_layers = 2;
  InputMode input_mode = InputMode::LatentXy;
  std::uint32_t pe_frequencies = 10;
  float siren_omega0 = 30.0f;
  std::uint32_t hash_levels = 16;
  std::uint32_t hash_features = 4;
  std::uint32_t hash_log2_table = 9;
  std::uint32_t hash_base_resolution = 16;
  float hash_per_level_scale = 2.0f;

  // Encoder + residual MLP. k = 0 drops the encoder and feeds (x, y) only.
  static ArchDescriptor ours(std::uint32_t k = 64);
  // conv-norm-ReLU encoder of roughly the same size as the NAF encoder.
  static ArchDescriptor ours_base_encoder();
  // Baseline factories check the baseline size budget.
  static ArchDescriptor siren(InputMode mode = InputMode::XyRgb);
  static ArchDescriptor nerf_pe(InputMode mode = InputMode::XyRgb);
  static ArchDescriptor hashgrid(InputMode mode = InputMode::XyRgb);

  // Throws ShapeError on inconsistent settings.
  void validate() const;

  bool has_encoder() const { return family == Family::EncoderMlp && k > 0; }
  bool has_hashgrid() const { return family == Family::HashGrid; }
  std::size_t head_input_dim() const;

  std::vector<std::uint8_t> serialize() const;
  static ArchDescriptor deserialize(std::span<const std::uint8_t> bytes);

  friend bool operator==(const ArchDescriptor&, const ArchDescriptor&) = default;
};

// Closed-form parameter counts.
std::size_t encoding_parameter_count(const ArchDescriptor& arch);
std::size_t head_parameter_count(const ArchDescriptor& arch);
inline std::size_t total_parameter_count(const ArchDescriptor& arch) {
  return encoding_parameter_count(arch) + head_parameter_count(arch);
}

// Baselines must land within this fraction of the reference metadata size.
inline constexpr double kBaselineReferenceBytes = 180'000.0;
inline constexpr double kBaselineSizeTolerance = 0.25;

nlohmann::json to_json(const ArchDescriptor& arch);
// Starts from the family default and applies the given keys; unknown keys throw.
ArchDescriptor arch_from_json(const nlohmann::json& j);

}  // namespace uhal::models
