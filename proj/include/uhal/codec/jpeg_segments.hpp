#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace uhal::codec {

inline constexpr std::uint8_t kApp11 = 0xEB;
inline constexpr std::size_t kMaxChunkPayload = 65000;
// "UHALMETA" plus a terminating NUL.
inline constexpr std::uint8_t kChunkIdentifier[9] = {'U', 'H', 'A', 'L', 'M', 'E', 'T', 'A', 0};

struct JpegSegment {
  std::uint8_t marker = 0;  // second marker byte, e.g. 0xE0 for APP0
  std::size_t offset = 0;   // position of the 0xFF byte
  std::size_t length = 0;   // total bytes including marker and length field
};

// Marker segments from SOI up to and including SOS. Throws MetadataError
// (MissingSoi, Truncated) on malformed headers.
std::vector<JpegSegment> walk_segments(std::span<const std::uint8_t> jpeg);

std::size_t chunk_count(std::size_t container_bytes);

// Inserts the container as APP11 chunks after the last APPn segment (or
// directly after SOI when there is none). Existing UHAL chunks are replaced.
std::vector<std::uint8_t> jpeg_embed(std::span<const std::uint8_t> jpeg, std::span<const std::uint8_t> container);

// Reassembles the container. Throws MetadataError: NotFound without UHAL
// chunks, ChunkGap when indices are missing, duplicated or inconsistent.
std::vector<std::uint8_t> jpeg_extract(std::span<const std::uint8_t> jpeg);

// Removes every UHAL chunk and nothing else.
std::vector<std::uint8_t> jpeg_strip(std::span<const std::uint8_t> jpeg);

// Entropy-coded data and trailer after the SOS header.
std::span<const std::uint8_t> jpeg_scan_data(std::span<const std::uint8_t> jpeg);

}  // namespace uhal::codec
