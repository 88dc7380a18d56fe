#pragma once

#include <cstddef>

namespace uhal::core {

// Row-parallel dense products on contiguous row-major buffers.
// C (M x N) (+)= A (M x K) * B (K x N)
template <typename T>
void matmul(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
// C (M x N) (+)= A^T * B with A stored K x M and B stored K x N
template <typename T>
void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
               bool accumulate);
// C (M x N) (+)= A * B^T with B stored N x K
template <typename T>
void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
               bool accumulate);

}  // namespace uhal::core
