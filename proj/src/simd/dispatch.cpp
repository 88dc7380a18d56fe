#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string_view>

#include "uhal/simd/kernels.hpp"

namespace uhal::simd {

#if defined(UHAL_HAVE_AVX2)
namespace detail {
const KernelTable<float>* avx2_float_table();
const KernelTable<double>* avx2_double_table();
}  // namespace detail
#endif

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(UHAL_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

template <>
const KernelTable<float>* avx2_kernels<float>() {
#if defined(UHAL_HAVE_AVX2)
  if (cpu_supports(Isa::Avx2)) return detail::avx2_float_table();
#endif
  return nullptr;
}

template <>
const KernelTable<double>* avx2_kernels<double>() {
#if defined(UHAL_HAVE_AVX2)
  if (cpu_supports(Isa::Avx2)) return detail::avx2_double_table();
#endif
  return nullptr;
}

namespace {

Isa initial_isa() {
  if (const char* env = std::getenv("UHAL_SIMD")) {
    if (std::string_view(env) == "scalar") return Isa::Scalar;
  }
  return cpu_supports(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& selected() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

Isa active_isa() { return selected().load(); }

void set_active_isa(Isa isa) {
  if (!cpu_supports(isa)) {
    throw std::invalid_argument(std::string("ISA not available: ") + isa_name(isa));
  }
  selected().store(isa);
}

template <typename T>
const KernelTable<T>& kernels() {
  if (active_isa() == Isa::Avx2) {
    if (const auto* t = avx2_kernels<T>()) return *t;
  }
  return scalar_kernels<T>();
}

template const KernelTable<float>& kernels<float>();
template const KernelTable<double>& kernels<double>();

}  // namespace uhal::simd
