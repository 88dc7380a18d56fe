#include "uhal/core/rng.hpp"

#include <cmath>
#include <numbers>

namespace uhal::core {

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += kGamma;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t CounterRng::bits(std::uint64_t counter) const {
  return splitmix64(key_ + counter * kGamma);
}

double CounterRng::uniform(std::uint64_t counter) const {
  return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
}

std::uint64_t CounterRng::below(std::uint64_t counter, std::uint64_t n) const {
  const unsigned __int128 prod = static_cast<unsigned __int128>(bits(counter)) * n;
  return static_cast<std::uint64_t>(prod >> 64);
}

double CounterRng::normal(std::uint64_t counter) const {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform(2 * counter);
  const double u2 = uniform(2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

CounterRng CounterRng::split(std::uint64_t stream) const {
  return CounterRng(splitmix64(key_ ^ splitmix64(stream + 0x6A09E667F3BCC909ull)));
}

}  // namespace uhal::core
