// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include <cmath>
#include <cstring>

#include "uhal/simd/kernels.hpp"

namespace uhal::simd {
namespace {

template <typename T>
struct Vec;

template <>
struct Vec<float> {
  using reg = __m256;
  static constexpr std::size_t lanes = 8;
  static reg zero() { return _mm256_setzero_ps(); }
  static reg set1(float v) { return _mm256_set1_ps(v); }
  static reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg fma(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
  static reg sub(reg a, reg b) { return _mm256_sub_ps(a, b); }
  static reg mul(reg a, reg b) { return _mm256_mul_ps(a, b); }
  static reg div(reg a, reg b) { return _mm256_div_ps(a, b); }
  static reg sqrt(reg a) { return _mm256_sqrt_ps(a); }
  static reg max(reg a, reg b) { return _mm256_max_ps(a, b); }
  static reg gt_mask(reg a, reg b) { return _mm256_cmp_ps(a, b, _CMP_GT_OQ); }
  static reg and_(reg a, reg b) { return _mm256_and_ps(a, b); }
  static float hsum(reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    lo = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, lo);
    return _mm_cvtss_f32(_mm_add_ss(lo, sh));
  }
};

template <>
struct Vec<double> {
  using reg = __m256d;
  static constexpr std::size_t lanes = 4;
  static reg zero() { return _mm256_setzero_pd(); }
  static reg set1(double v) { return _mm256_set1_pd(v); }
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg fma(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
  static reg sub(reg a, reg b) { return _mm256_sub_pd(a, b); }
  static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
  static reg div(reg a, reg b) { return _mm256_div_pd(a, b); }
  static reg sqrt(reg a) { return _mm256_sqrt_pd(a); }
  static reg max(reg a, reg b) { return _mm256_max_pd(a, b); }
  static reg gt_mask(reg a, reg b) { return _mm256_cmp_pd(a, b, _CMP_GT_OQ); }
  static reg and_(reg a, reg b) { return _mm256_and_pd(a, b); }
  static double hsum(reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
  }
};

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  using V = Vec<T>;
  constexpr std::size_t L = V::lanes;
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * lda;
    T* crow = c + i * ldc;
    std::size_t j = 0;
    for (; j + 4 * L <= n; j += 4 * L) {
      typename V::reg c0 = accumulate ? V::load(crow + j) : V::zero();
      typename V::reg c1 = accumulate ? V::load(crow + j + L) : V::zero();
      typename V::reg c2 = accumulate ? V::load(crow + j + 2 * L) : V::zero();
      typename V::reg c3 = accumulate ? V::load(crow + j + 3 * L) : V::zero();
      for (std::size_t kk = 0; kk < k; ++kk) {
        const typename V::reg av = V::set1(arow[kk]);
        const T* brow = b + kk * ldb + j;
        c0 = V::fma(av, V::load(brow), c0);
        c1 = V::fma(av, V::load(brow + L), c1);
        c2 = V::fma(av, V::load(brow + 2 * L), c2);
        c3 = V::fma(av, V::load(brow + 3 * L), c3);
      }
      V::store(crow + j, c0);
      V::store(crow + j + L, c1);
      V::store(crow + j + 2 * L, c2);
      V::store(crow + j + 3 * L, c3);
    }
    for (; j + L <= n; j += L) {
      typename V::reg c0 = accumulate ? V::load(crow + j) : V::zero();
      for (std::size_t kk = 0; kk < k; ++kk) {
        c0 = V::fma(V::set1(arow[kk]), V::load(b + kk * ldb + j), c0);
      }
      V::store(crow + j, c0);
    }
    for (; j < n; ++j) {
      T acc = accumulate ? crow[j] : T(0);
      for (std::size_t kk = 0; kk < k; ++kk) acc = std::fma(arow[kk], b[kk * ldb + j], acc);
      crow[j] = acc;
    }
  }
}

template <typename T>
void axpy_fma(std::size_t n, T alpha, const T* x, T* y) {
  using V = Vec<T>;
  constexpr std::size_t L = V::lanes;
  const typename V::reg av = V::set1(alpha);
  std::size_t j = 0;
  for (; j + L <= n; j += L) V::store(y + j, V::fma(av, V::load(x + j), V::load(y + j)));
  for (; j < n; ++j) y[j] = std::fma(alpha, x[j], y[j]);
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
      if (av == T(0)) continue;
      axpy_fma(n, av, brow, c + i * ldc);
    }
  }
}

template <typename T>
void mul_acc(std::size_t n, const T* a, const T* b, T* y) {
  using V = Vec<T>;
  constexpr std::size_t L = V::lanes;
  std::size_t j = 0;
  for (; j + L <= n; j += L) V::store(y + j, V::fma(V::load(a + j), V::load(b + j), V::load(y + j)));
  for (; j < n; ++j) y[j] = std::fma(a[j], b[j], y[j]);
}

template <typename T>
T dot(std::size_t n, const T* a, const T* b) {
  using V = Vec<T>;
  constexpr std::size_t L = V::lanes;
  typename V::reg s0 = V::zero(), s1 = V::zero();
  std::size_t j = 0;
  for (; j + 2 * L <= n; j += 2 * L) {
    s0 = V::fma(V::load(a + j), V::load(b + j), s0);
    s1 = V::fma(V::load(a + j + L), V::load(b + j + L), s1);
  }
  for (; j + L <= n; j += L) s0 = V::fma(V::load(a + j), V::load(b + j), s0);
  T s = V::hsum(V::add(s0, s1));
  for (; j < n; ++j) s = std::fma(a[j], b[j], s);
  return s;
}

template <typename T>
void relu(std::size_t n, const T* x, T* y) {
  using V = Vec<T>;
  constexpr std::size_t L = V::lanes;
  std::size_t j = 0;
  for (; j + L <= n; j += L) V::store(y + j, V::max(V::load(x + j), V::zero()));
  for (; j < n; ++j) y[j] = x[j] > T(0) ? x[j] : T(0);
}

template <typename T>
void relu_backward(std::size_t n, const T* x, const T* dy, T* dx) {
  using V = Vec<T>;
  constexpr std::size_t L = V::lanes;
  std::size_t j = 0;
  for (; j + L <= n; j += L) {
    const auto mask = V::gt_mask(V::load(x + j), V::zero());
    V::store(dx + j, V::add(V::load(dx + j), V::and_(mask, V::load(dy + j))));
  }
  for (; j < n; ++j) {
    if (x[j] > T(0)) dx[j] += dy[j];
  }
}

template <typename T>
void adam(std::size_t n, T* p, const T* g, T* m, T* v, const AdamCoeffs<T>& c) {
  using V = Vec<T>;
  constexpr std::size_t L = V::lanes;
  const auto b1 = V::set1(c.beta1), b2 = V::set1(c.beta2);
  const auto ob1 = V::set1(T(1) - c.beta1), ob2 = V::set1(T(1) - c.beta2);
  const auto bias1 = V::set1(c.bias1), bias2 = V::set1(c.bias2);
  const auto lr = V::set1(c.lr), eps = V::set1(c.eps);
  std::size_t j = 0;
  for (; j + L <= n; j += L) {
    const auto gv = V::load(g + j);
    const auto mv = V::add(V::mul(b1, V::load(m + j)), V::mul(ob1, gv));
    const auto vv = V::add(V::mul(b2, V::load(v + j)), V::mul(V::mul(ob2, gv), gv));
    V::store(m + j, mv);
    V::store(v + j, vv);
    const auto mhat = V::div(mv, bias1);
    const auto vhat = V::div(vv, bias2);
    const auto step = V::div(V::mul(lr, mhat), V::add(V::sqrt(vhat), eps));
    V::store(p + j, V::sub(V::load(p + j), step));
  }
  for (; j < n; ++j) {
    m[j] = c.beta1 * m[j] + (T(1) - c.beta1) * g[j];
    v[j] = c.beta2 * v[j] + (T(1) - c.beta2) * g[j] * g[j];
    const T mhat = m[j] / c.bias1;
    const T vhat = v[j] / c.bias2;
    p[j] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

template <typename T>
constexpr KernelTable<T> make_table() {
  return KernelTable<T>{Isa::Avx2, &gemm_nn<T>, &gemm_tn<T>,        &axpy_fma<T>, &mul_acc<T>,
                        &dot<T>,    &relu<T>,    &relu_backward<T>, &adam<T>};
}

constexpr KernelTable<float> kFloat = make_table<float>();
constexpr KernelTable<double> kDouble = make_table<double>();

}  // namespace

namespace detail {
const KernelTable<float>* avx2_float_table() { return &kFloat; }
const KernelTable<double>* avx2_double_table() { return &kDouble; }
}  // namespace detail

}  // namespace uhal::simd
