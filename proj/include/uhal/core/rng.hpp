#pragma once

#include <cstdint>

namespace uhal::core {

// Counter-based generator: every draw is splitmix64(key + counter * gamma).
// A key plus a 64-bit counter fully determines a value, so streams can be
// split and replayed without carrying state between calls.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t key() const { return key_; }

  std::uint64_t bits(std::uint64_t counter) const;
  // Uniform in [0, 1) with 53 random bits.
  double uniform(std::uint64_t counter) const;
  // Uniform integer in [0, n) via the 128-bit multiply-shift map.
  std::uint64_t below(std::uint64_t counter, std::uint64_t n) const;
  // Standard normal via Box-Muller over counters 2c and 2c+1.
  double normal(std::uint64_t counter) const;

  // Independent child stream.
  CounterRng split(std::uint64_t stream) const;

 private:
  std::uint64_t key_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Sequential convenience wrapper over CounterRng for init code.
class RngStream {
 public:
  explicit RngStream(CounterRng rng) : rng_(rng) {}
  explicit RngStream(std::uint64_t key) : rng_(key) {}

  double uniform() { return rng_.uniform(next_++); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t below(std::uint64_t n) { return rng_.below(next_++, n); }
  double normal() { return rng_.normal(next_++); }

 private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
};

}  // namespace uhal::core
