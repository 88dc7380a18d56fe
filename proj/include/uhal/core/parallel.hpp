#pragma once

#include <cstddef>
#include <functional>

namespace uhal::core {

// Worker count used by parallel_for. Defaults to UHAL_THREADS when set,
// otherwise std::thread::hardware_concurrency().
std::size_t thread_count();
void set_thread_count(std::size_t n);

// Runs fn(begin, end) over contiguous sub-ranges of [0, n). Every index is
// handled by exactly one call, so per-index results never depend on the split.
void parallel_for(std::size_t n, std::size_t min_grain,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace uhal::core
