#include "uhal/codec/jpeg_segments.hpp"

#include <algorithm>
#include <cstring>
#include <map>

#include "uhal/core/error.hpp"

namespace uhal::codec {

namespace {

using K = MetadataError::Kind;

// Markers without a length field.
bool standalone(std::uint8_t m) { return m == 0x01 || (m >= 0xD0 && m <= 0xD7); }

bool is_uhal_chunk(std::span<const std::uint8_t> jpeg, const JpegSegment& s) {
  return s.marker == kApp11 && s.length >= 4 + sizeof(kChunkIdentifier) + 4 &&
         std::memcmp(jpeg.data() + s.offset + 4, kChunkIdentifier, sizeof(kChunkIdentifier)) == 0;
}

std::uint16_t be16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] << 8 | p[1]); }

}  // namespace

std::vector<JpegSegment> walk_segments(std::span<const std::uint8_t> jpeg) {
  if (jpeg.size() < 2 || jpeg[0] != 0xFF || jpeg[1] != 0xD8) throw MetadataError(K::MissingSoi, "JPEG stream does not start with SOI");
  std::vector<JpegSegment> out;
  out.push_back({0xD8, 0, 2});
  std::size_t pos = 2;
  while (true) {
    if (pos >= jpeg.size()) throw MetadataError(K::Truncated, "JPEG ends before the start of scan");
    if (jpeg[pos] != 0xFF) throw MetadataError(K::Truncated, "expected a marker at offset " + std::to_string(pos));
    std::size_t m = pos + 1;
    while (m < jpeg.size() && jpeg[m] == 0xFF) ++m;  // fill bytes
    if (m >= jpeg.size()) throw MetadataError(K::Truncated, "JPEG ends inside a marker");
    const std::uint8_t marker = jpeg[m];
    if (marker == 0xD9) throw MetadataError(K::Truncated, "EOI before any scan");
    if (standalone(marker)) {
      out.push_back({marker, pos, m + 1 - pos});
      pos = m + 1;
      continue;
    }
    if (m + 2 >= jpeg.size()) throw MetadataError(K::Truncated, "JPEG ends inside a segment length");
    const std::size_t len = be16(jpeg.data() + m + 1);
    if (len < 2 || m + 1 + len > jpeg.size()) {
      throw MetadataError(K::Truncated, "segment at offset " + std::to_string(pos) + " runs past the end of the file");
    }
    out.push_back({marker, pos, m + 1 + len - pos});
    pos = m + 1 + len;
    if (marker == 0xDA) return out;
  }
}

std::size_t chunk_count(std::size_t container_bytes) {
  return container_bytes == 0 ? 1 : (container_bytes + kMaxChunkPayload - 1) / kMaxChunkPayload;
}

std::vector<std::uint8_t> jpeg_strip(std::span<const std::uint8_t> jpeg) {
  const auto segs = walk_segments(jpeg);
  std::vector<std::uint8_t> out;
  out.reserve(jpeg.size());
  std::size_t copied = 0;
  for (const auto& s : segs) {
    if (!is_uhal_chunk(jpeg, s)) continue;
    out.insert(out.end(), jpeg.begin() + copied, jpeg.begin() + s.offset);
    copied = s.offset + s.length;
  }
  out.insert(out.end(), jpeg.begin() + copied, jpeg.end());
  return out;
}

std::vector<std::uint8_t> jpeg_embed(std::span<const std::uint8_t> jpeg, std::span<const std::uint8_t> container) {
  const std::vector<std::uint8_t> base = jpeg_strip(jpeg);
  const auto segs = walk_segments(base);
  std::size_t insert_at = 2;
  for (const auto& s : segs) {
    if (s.marker >= 0xE0 && s.marker <= 0xEF) insert_at = s.offset + s.length;
  }
  const std::size_t total = chunk_count(container.size());
  if (total > 0xFFFF) throw MetadataError(K::Truncated, "container too large for 65535 chunks");

  std::vector<std::uint8_t> chunks;
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t off = i * kMaxChunkPayload;
    const std::size_t n = std::min(kMaxChunkPayload, container.size() - std::min(container.size(), off));
    const std::size_t len = 2 + sizeof(kChunkIdentifier) + 4 + n;
    chunks.push_back(0xFF);
    chunks.push_back(kApp11);
    chunks.push_back(static_cast<std::uint8_t>(len >> 8));
    chunks.push_back(static_cast<std::uint8_t>(len & 0xFF));
    chunks.insert(chunks.end(), std::begin(kChunkIdentifier), std::end(kChunkIdentifier));
    chunks.push_back(static_cast<std::uint8_t>(i >> 8));
    chunks.push_back(static_cast<std::uint8_t>(i & 0xFF));
    chunks.push_back(static_cast<std::uint8_t>(total >> 8));
    chunks.push_back(static_cast<std::uint8_t>(total & 0xFF));
    chunks.insert(chunks.end(), container.begin() + off, container.begin() + off + n);
  }
  std::vector<std::uint8_t> out;
  out.reserve(base.size() + chunks.size());
  out.insert(out.end(), base.begin(), base.begin() + insert_at);
  out.insert(out.end(), chunks.begin(), chunks.end());
  out.insert(out.end(), base.begin() + insert_at, base.end());
  return out;
}

std::vector<std::uint8_t> jpeg_extract(std::span<const std::uint8_t> jpeg) {
  const auto segs = walk_segments(jpeg);
  std::map<std::uint16_t, std::span<const std::uint8_t>> parts;
  std::uint16_t total = 0;
  for (const auto& s : segs) {
    if (!is_uhal_chunk(jpeg, s)) continue;
    const std::uint8_t* p = jpeg.data() + s.offset + 4 + sizeof(kChunkIdentifier);
    const std::uint16_t index = be16(p), count = be16(p + 2);
    if (count == 0 || index >= count) throw MetadataError(K::ChunkGap, "chunk index " + std::to_string(index) + " of " + std::to_string(count) + " is invalid");
    if (total != 0 && count != total) throw MetadataError(K::ChunkGap, "chunks disagree on the chunk total");
    total = count;
    if (!parts.emplace(index, std::span(p + 4, s.length - (4 + sizeof(kChunkIdentifier) + 4))).second) {
      throw MetadataError(K::ChunkGap, "chunk " + std::to_string(index) + " appears twice");
    }
  }
  if (parts.empty()) throw MetadataError(K::NotFound, "metadata not found: no UHAL segments in JPEG");
  if (parts.size() != total) {
    for (std::uint16_t i = 0; i < total; ++i) {
      if (!parts.count(i)) throw MetadataError(K::ChunkGap, "chunk " + std::to_string(i) + " of " + std::to_string(total) + " is missing");
    }
  }
  std::vector<std::uint8_t> out;
  for (const auto& [i, span] : parts) out.insert(out.end(), span.begin(), span.end());
  return out;
}

std::span<const std::uint8_t> jpeg_scan_data(std::span<const std::uint8_t> jpeg) {
  const auto segs = walk_segments(jpeg);
  const auto& sos = segs.back();
  return jpeg.subspan(sos.offset + sos.length);
}

}  // namespace uhal::codec
