#include <cmath>
#include <cstring>

#include "uhal/simd/kernels.hpp"

namespace uhal::simd {
namespace {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    if (!accumulate) std::memset(crow, 0, n * sizeof(T));
    const T* arow = a + i * lda;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      const T* brow = b + kk * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m; ++i) std::memset(c + i * ldc, 0, n * sizeof(T));
  }
  for (std::size_t kk = 0; kk < k; ++kk) {
    const T* arow = a + kk * lda;
    const T* brow = b + kk * ldb;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c + i * ldc;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void mul_acc(std::size_t n, const T* a, const T* b, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

template <typename T>
T dot(std::size_t n, const T* a, const T* b) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
void relu(std::size_t n, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(std::size_t n, const T* x, const T* dy, T* dx) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > T(0)) dx[i] += dy[i];
  }
}

template <typename T>
void adam(std::size_t n, T* p, const T* g, T* m, T* v, const AdamCoeffs<T>& c) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = c.beta1 * m[i] + (T(1) - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (T(1) - c.beta2) * g[i] * g[i];
    const T mhat = m[i] / c.bias1;
    const T vhat = v[i] / c.bias2;
    p[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

template <typename T>
constexpr KernelTable<T> make_table() {
  return KernelTable<T>{Isa::Scalar,   &gemm_nn<T>,       &gemm_tn<T>, &axpy<T>, &mul_acc<T>,
                        &dot<T>,       &relu<T>,          &relu_backward<T>, &adam<T>};
}

constexpr KernelTable<float> kFloat = make_table<float>();
constexpr KernelTable<double> kDouble = make_table<double>();

}  // namespace

template <>
const KernelTable<float>& scalar_kernels<float>() {
  return kFloat;
}
template <>
const KernelTable<double>& scalar_kernels<double>() {
  return kDouble;
}

}  // namespace uhal::simd
