#pragma once

#include <cstddef>

namespace uhal::simd {

enum class Isa { Scalar, Avx2 };

const char* isa_name(Isa isa);

// Per-step Adam constants. bias1 = 1 - beta1^t, bias2 = 1 - beta2^t.
template <typename T>
struct AdamCoeffs {
  T lr;
  T beta1;
  T beta2;
  T eps;
  T bias1;
  T bias2;
};

// Inner loops shared by every op. All matrices are row-major with explicit
// leading dimensions; each output row is produced by one sequential pass, so
// splitting rows across threads never changes the result.
template <typename T>
struct KernelTable {
  Isa isa;
  // C[i,:] (+)= sum_k A[i,k] * B[k,:]        A is M x K, B is K x N
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                  const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate);
  // C[i,:] (+)= sum_k A[k,i] * B[k,:]        A is K x M, B is K x N
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                  const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate);
  // y += alpha * x
  void (*axpy)(std::size_t n, T alpha, const T* x, T* y);
  // y += a * b
  void (*mul_acc)(std::size_t n, const T* a, const T* b, T* y);
  T (*dot)(std::size_t n, const T* a, const T* b);
  void (*relu)(std::size_t n, const T* x, T* y);
  // dx += dy where x > 0
  void (*relu_backward)(std::size_t n, const T* x, const T* dy, T* dx);
  void (*adam)(std::size_t n, T* param, const T* grad, T* m, T* v, const AdamCoeffs<T>& c);
};

template <typename T>
const KernelTable<T>& scalar_kernels();

// nullptr when the AVX2 variant was not compiled in or the CPU lacks AVX2/FMA.
template <typename T>
const KernelTable<T>* avx2_kernels();

bool cpu_supports(Isa isa);

// Process-wide selection. Starts at the best supported ISA unless
// UHAL_SIMD=scalar is set. Throws std::invalid_argument for unsupported ISAs.
Isa active_isa();
void set_active_isa(Isa isa);

template <typename T>
const KernelTable<T>& kernels();

}  // namespace uhal::simd
