#include "uhal/models/arch.hpp"

#include <cmath>

#include "uhal/core/bytes.hpp"
#include "uhal/core/error.hpp"
#include "uhal/models/hashgrid.hpp"

namespace uhal::models {

std::string to_string(Family f) {
  switch (f) {
    case Family::EncoderMlp: return "encoder_mlp";
    case Family::Siren: return "siren";
    case Family::NerfPe: return "nerf_pe";
    case Family::HashGrid: return "hashgrid";
  }
  return "unknown";
}

std::string to_string(InputMode m) {
  switch (m) {
    case InputMode::Xy: return "xy";
    case InputMode::XyRgb: return "xyrgb";
    case InputMode::LatentXy: return "latent_xy";
    case InputMode::LatentOnly: return "latent_only";
  }
  return "unknown";
}

std::string to_string(EncoderKind k) { return k == EncoderKind::Naf ? "naf" : "base"; }

Family parse_family(const std::string& s) {
  if (s == "encoder_mlp" || s == "ours") return Family::EncoderMlp;
  if (s == "siren") return Family::Siren;
  if (s == "nerf_pe" || s == "nerf") return Family::NerfPe;
  if (s == "hashgrid") return Family::HashGrid;
  throw ShapeError("unknown model family '" + s + "'");
}

InputMode parse_input_mode(const std::string& s) {
  if (s == "xy") return InputMode::Xy;
  if (s == "xyrgb") return InputMode::XyRgb;
  if (s == "latent_xy") return InputMode::LatentXy;
  if (s == "latent_only") return InputMode::LatentOnly;
  throw ShapeError("unknown input mode '" + s + "'");
}

EncoderKind parse_encoder_kind(const std::string& s) {
  if (s == "naf") return EncoderKind::Naf;
  if (s == "base") return EncoderKind::Base;
  throw ShapeError("unknown encoder kind '" + s + "'");
}

namespace {

void check_baseline_budget(const ArchDescriptor& a) {
  const double bytes = 4.0 * static_cast<double>(total_parameter_count(a));
  const double rel = std::abs(bytes / kBaselineReferenceBytes - 1.0);
  if (rel > kBaselineSizeTolerance) {
    throw ShapeError(to_string(a.family) + " baseline has " + std::to_string(static_cast<long>(bytes)) +
                     " weight bytes, outside the size budget");
  }
}

std::size_t mlp_count(std::size_t in, std::size_t hidden, std::size_t layers, std::size_t out) {
  std::size_t n = (in + 1) * hidden;
  for (std::size_t i = 1; i < layers; ++i) n += (hidden + 1) * hidden;
  return n + (hidden + 1) * out;
}

std::size_t naf_block_count(std::size_t c) { return 7 * c * c + 33 * c; }

}  // namespace

ArchDescriptor ArchDescriptor::ours(std::uint32_t k) {
  ArchDescriptor a;
  a.k = k;
  a.input_mode = k == 0 ? InputMode::Xy : InputMode::LatentXy;
  a.validate();
  return a;
}

ArchDescriptor ArchDescriptor::ours_base_encoder() {
  ArchDescriptor a;
  a.encoder_kind = EncoderKind::Base;
  a.encoder_width = 34;
  a.validate();
  return a;
}

ArchDescriptor ArchDescriptor::siren(InputMode mode) {
  ArchDescriptor a;
  a.family = Family::Siren;
  a.k = 0;
  a.input_mode = mode;
  a.mlp_hidden = 128;
  a.mlp_layers = 4;
  a.validate();
  check_baseline_budget(a);
  return a;
}

ArchDescriptor ArchDescriptor::nerf_pe(InputMode mode) {
  ArchDescriptor a = siren(mode);
  a.family = Family::NerfPe;
  a.validate();
  check_baseline_budget(a);
  return a;
}

ArchDescriptor ArchDescriptor::hashgrid(InputMode mode) {
  ArchDescriptor a;
  a.family = Family::HashGrid;
  a.k = 0;
  a.input_mode = mode;
  a.validate();
  check_baseline_budget(a);
  return a;
}

void ArchDescriptor::validate() const {
  auto bad = [](const std::string& m) { throw ShapeError("arch: " + m); };
  if (mlp_hidden == 0 || mlp_layers == 0) bad("MLP needs at least one hidden layer of positive width");
  const bool coord_mode = input_mode == InputMode::Xy || input_mode == InputMode::XyRgb;
  switch (family) {
    case Family::EncoderMlp:
      if (k != 0 && k != 32 && k != 64 && k != 128) bad("k must be one of 0, 32, 64, 128, got " + std::to_string(k));
      if (k == 0 && !coord_mode) bad("k = 0 has no latent; input_mode must be xy or xyrgb");
      if (k > 0 && coord_mode) bad("k > 0 needs input_mode latent_xy or latent_only");
      if (k > 0 && (encoder_width == 0 || encoder_blocks == 0)) bad("encoder width and block count must be positive");
      break;
    case Family::Siren:
    case Family::NerfPe:
    case Family::HashGrid:
      if (!coord_mode) bad(to_string(family) + " accepts input_mode xy or xyrgb only");
      break;
  }
  if (family == Family::NerfPe && pe_frequencies < 1) bad("pe_frequencies must be >= 1");
  if (family == Family::Siren && !(siren_omega0 > 0.0f)) bad("siren_omega0 must be positive");
  if (family == Family::HashGrid) {
    if (hash_levels == 0 || hash_features == 0) bad("hashgrid needs levels and features");
    if (hash_log2_table < 1 || hash_log2_table > 24) bad("hash_log2_table must be in [1, 24]");
    if (hash_base_resolution == 0 || !(hash_per_level_scale >= 1.0f)) bad("invalid hashgrid resolution schedule");
  }
}

std::size_t ArchDescriptor::head_input_dim() const {
  const std::size_t rgb = input_mode == InputMode::XyRgb ? 3 : 0;
  switch (family) {
    case Family::EncoderMlp:
      if (k == 0) return 2 + rgb;
      return input_mode == InputMode::LatentXy ? k + 2 : k;
    case Family::Siren:
      return 2 + rgb;
    case Family::NerfPe:
      return 4 * pe_frequencies + rgb;
    case Family::HashGrid:
      return hash_levels * hash_features + rgb;
  }
  return 0;
}

std::size_t encoding_parameter_count(const ArchDescriptor& a) {
  if (a.has_hashgrid()) {
    std::size_t rows = 0;
    for (const auto& l : hashgrid_layout(a.hash_levels, a.hash_log2_table, a.hash_base_resolution,
                                         a.hash_per_level_scale)) {
      rows += l.entries;
    }
    return rows * a.hash_features;
  }
  if (!a.has_encoder()) return 0;
  const std::size_t w = a.encoder_width, k = a.k, b = a.encoder_blocks;
  if (a.encoder_kind == EncoderKind::Base) {
    return (27 * w + w) + 2 * w + (9 * w * w + w) + 2 * w + (9 * w * k + k);
  }
  return (27 * w + w) + b * naf_block_count(w) + (8 * w * w + 2 * w) + b * naf_block_count(2 * w) + 8 * w * w +
         b * naf_block_count(w) + (9 * w * k + k);
}

std::size_t head_parameter_count(const ArchDescriptor& a) {
  return mlp_count(a.head_input_dim(), a.mlp_hidden, a.mlp_layers, 3);
}

std::vector<std::uint8_t> ArchDescriptor::serialize() const {
  core::ByteWriter w;
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(family));
  w.u8(static_cast<std::uint8_t>(encoder_kind));
  w.u8(static_cast<std::uint8_t>(input_mode));
  w.u32(k);
  w.u32(encoder_width);
  w.u32(encoder_blocks);
  w.u32(mlp_hidden);
  w.u32(mlp_layers);
  w.u32(pe_frequencies);
  w.f32(siren_omega0);
  w.u32(hash_levels);
  w.u32(hash_features);
  w.u32(hash_log2_table);
  w.u32(hash_base_resolution);
  w.f32(hash_per_level_scale);
  return w.take();
}

ArchDescriptor ArchDescriptor::deserialize(std::span<const std::uint8_t> bytes) {
  core::ByteReader r(bytes);
  const std::uint8_t version = r.u8();
  if (version != kVersion) {
    throw MetadataError(MetadataError::Kind::UnsupportedVersion,
                        "unsupported arch descriptor version " + std::to_string(version));
  }
  ArchDescriptor a;
  const std::uint8_t fam = r.u8(), enc = r.u8(), mode = r.u8();
  if (fam > 3 || enc > 1 || mode > 3) {
    throw MetadataError(MetadataError::Kind::ArchMismatch, "arch descriptor has out-of-range enum values");
  }
  a.family = static_cast<Family>(fam);
  a.encoder_kind = static_cast<EncoderKind>(enc);
  a.input_mode = static_cast<InputMode>(mode);
  a.k = r.u32();
  a.encoder_width = r.u32();
  a.encoder_blocks = r.u32();
  a.mlp_hidden = r.u32();
  a.mlp_layers = r.u32();
  a.pe_frequencies = r.u32();
  a.siren_omega0 = r.f32();
  a.hash_levels = r.u32();
  a.hash_features = r.u32();
  a.hash_log2_table = r.u32();
  a.hash_base_resolution = r.u32();
  a.hash_per_level_scale = r.f32();
  if (r.remaining() != 0) {
    throw MetadataError(MetadataError::Kind::ArchMismatch, "trailing bytes after arch descriptor");
  }
  try {
    a.validate();
  } catch (const ShapeError& e) {
    throw MetadataError(MetadataError::Kind::ArchMismatch, e.what());
  }
  return a;
}

nlohmann::json to_json(const ArchDescriptor& a) {
  return nlohmann::json{{"family", to_string(a.family)},
                        {"encoder_kind", to_string(a.encoder_kind)},
                        {"k", a.k},
                        {"encoder_width", a.encoder_width},
                        {"encoder_blocks", a.encoder_blocks},
                        {"mlp_hidden", a.mlp_hidden},
                        {"mlp_layers", a.mlp_layers},
                        {"input_mode", to_string(a.input_mode)},
                        {"pe_frequencies", a.pe_frequencies},
                        {"siren_omega0", a.siren_omega0},
                        {"hash_levels", a.hash_levels},
                        {"hash_features", a.hash_features},
                        {"hash_log2_table", a.hash_log2_table},
                        {"hash_base_resolution", a.hash_base_resolution},
                        {"hash_per_level_scale", a.hash_per_level_scale}};
}

ArchDescriptor arch_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("arch config must be a JSON object");
  const Family fam = j.contains("family") ? parse_family(j.at("family").get<std::string>()) : Family::EncoderMlp;
  const InputMode mode = j.contains("input_mode") ? parse_input_mode(j.at("input_mode").get<std::string>())
                                                  : InputMode::XyRgb;
  ArchDescriptor a;
  switch (fam) {
    case Family::EncoderMlp: a = ArchDescriptor::ours(); break;
    case Family::Siren: a = ArchDescriptor::siren(mode == InputMode::Xy ? InputMode::Xy : InputMode::XyRgb); break;
    case Family::NerfPe: a = ArchDescriptor::nerf_pe(mode == InputMode::Xy ? InputMode::Xy : InputMode::XyRgb); break;
    case Family::HashGrid: a = ArchDescriptor::hashgrid(mode == InputMode::Xy ? InputMode::Xy : InputMode::XyRgb); break;
  }
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "family") continue;
      else if (key == "encoder_kind") a.encoder_kind = parse_encoder_kind(v.get<std::string>());
      else if (key == "k") {
        a.k = v.get<std::uint32_t>();
        if (!j.contains("input_mode")) a.input_mode = a.k == 0 ? InputMode::Xy : InputMode::LatentXy;
      }
      else if (key == "encoder_width") a.encoder_width = v.get<std::uint32_t>();
      else if (key == "encoder_blocks") a.encoder_blocks = v.get<std::uint32_t>();
      else if (key == "mlp_hidden") a.mlp_hidden = v.get<std::uint32_t>();
      else if (key == "mlp_layers") a.mlp_layers = v.get<std::uint32_t>();
      else if (key == "input_mode") a.input_mode = parse_input_mode(v.get<std::string>());
      else if (key == "pe_frequencies") a.pe_frequencies = v.get<std::uint32_t>();
      else if (key == "siren_omega0") a.siren_omega0 = v.get<float>();
      else if (key == "hash_levels") a.hash_levels = v.get<std::uint32_t>();
      else if (key == "hash_features") a.hash_features = v.get<std::uint32_t>();
      else if (key == "hash_log2_table") a.hash_log2_table = v.get<std::uint32_t>();
      else if (key == "hash_base_resolution") a.hash_base_resolution = v.get<std::uint32_t>();
      else if (key == "hash_per_level_scale") a.hash_per_level_scale = v.get<float>();
      else throw DataError("unknown arch key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw DataError("arch key '" + key + "': " + e.what());
    }
  }
  a.validate();
  return a;
}

}  // namespace uhal::models
