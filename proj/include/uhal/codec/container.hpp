#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "uhal/models/arch.hpp"
#include "uhal/models/recovery_model.hpp"

namespace uhal::codec {

enum class Modality : std::uint8_t { NaturalSr = 0, TextSr = 1, LowLight = 2, Custom = 255 };

std::string to_string(Modality m);
Modality parse_modality(const std::string& s);

inline constexpr std::uint16_t kContainerVersion = 1;

// Byte layout (little-endian):
//   "UHAL" | u16 version | u8 modality | u32 n | n arch bytes | u8 include_encoder
//   | per tensor: u32 count, count x f32 | u32 crc32 of everything before it
// Tensors run encoding-first then head, in model construction order; the
// encoding block is absent when include_encoder is 0.
struct MetadataContainer {
  Modality modality = Modality::NaturalSr;
  models::ArchDescriptor arch;
  bool include_encoder = true;
  models::WeightBundle weights;

  friend bool operator==(const MetadataContainer&, const MetadataContainer&) = default;
};

// Checks tensor counts against the arch and writes the bytes. Throws
// ShapeError on mismatch.
std::vector<std::uint8_t> serialize_container(const MetadataContainer& c);
// Verifies magic, crc, version and arch before decoding any weights.
MetadataContainer deserialize_container(std::span<const std::uint8_t> bytes);

// Builds a container from a model's current weights.
MetadataContainer make_container(const models::RecoveryModel<float>& model, Modality modality, bool include_encoder);

// Size of the container for an arch, without building weights.
std::size_t container_size(const models::ArchDescriptor& arch, bool include_encoder);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

}  // namespace uhal::codec
