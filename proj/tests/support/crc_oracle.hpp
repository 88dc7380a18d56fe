#pragma once

#include <zlib.h>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace uhal::testkit {

// CRC-32 register update without the pre/post inversion; linear over GF(2)
// in (state, data).
inline std::uint32_t crc_raw_update(std::uint32_t state, std::uint8_t byte) {
  return ~static_cast<std::uint32_t>(::crc32(~state & 0xffffffffu, &byte, 1));
}

// Change in the final checksum caused by flipping bit `bit` of byte `pos`
// in an n-byte message. Zero would mean the flip goes unnoticed.
inline std::uint32_t crc_flip_syndrome(std::size_t n, std::size_t pos, int bit) {
  std::uint32_t v = crc_raw_update(0, static_cast<std::uint8_t>(1u << bit));
  for (std::size_t i = pos + 1; i < n; ++i) v = crc_raw_update(v, 0);
  return v;
}

// Syndromes of every single-bit flip in an n-byte message, computed back to
// front in O(8 n). Returns the number of flips with a zero syndrome.
inline std::size_t crc_undetected_single_bit_flips(std::size_t n) {
  std::array<std::uint32_t, 8> v{};
  for (int b = 0; b < 8; ++b) v[b] = crc_raw_update(0, static_cast<std::uint8_t>(1u << b));
  std::size_t undetected = 0;
  for (std::size_t i = n; i-- > 0;) {
    for (int b = 0; b < 8; ++b) {
      if (v[b] == 0) ++undetected;
      v[b] = crc_raw_update(v[b], 0);
    }
  }
  return undetected;
}

}  // namespace uhal::testkit
