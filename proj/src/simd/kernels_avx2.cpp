// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "vidsal/simd/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace vidsal::simd::detail {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d high64 = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
}

// Thin traits so one body serves both precisions.
template <class Real>
struct Vec;

template <>
struct Vec<float> {
  using type = __m256;
  static constexpr std::size_t width = 8;
  static type zero() { return _mm256_setzero_ps(); }
  static type load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, type v) { _mm256_storeu_ps(p, v); }
  static type broadcast(float a) { return _mm256_set1_ps(a); }
  static type fma(type a, type b, type c) { return _mm256_fmadd_ps(a, b, c); }
  static type add(type a, type b) { return _mm256_add_ps(a, b); }
  static float sum(type v) { return hsum(v); }
};

template <>
struct Vec<double> {
  using type = __m256d;
  static constexpr std::size_t width = 4;
  static type zero() { return _mm256_setzero_pd(); }
  static type load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, type v) { _mm256_storeu_pd(p, v); }
  static type broadcast(double a) { return _mm256_set1_pd(a); }
  static type fma(type a, type b, type c) { return _mm256_fmadd_pd(a, b, c); }
  static type add(type a, type b) { return _mm256_add_pd(a, b); }
  static double sum(type v) { return hsum(v); }
};

template <class Real>
Real dot_avx2(const Real* x, const Real* y, std::size_t n) {
  using V = Vec<Real>;
  constexpr std::size_t w = V::width;
  auto a0 = V::zero(), a1 = V::zero();
  std::size_t i = 0;
  for (; i + 2 * w <= n; i += 2 * w) {
    a0 = V::fma(V::load(x + i), V::load(y + i), a0);
    a1 = V::fma(V::load(x + i + w), V::load(y + i + w), a1);
  }
  for (; i + w <= n; i += w) a0 = V::fma(V::load(x + i), V::load(y + i), a0);
  Real acc = V::sum(V::add(a0, a1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <class Real>
void axpy_avx2(Real a, const Real* x, Real* y, std::size_t n) {
  using V = Vec<Real>;
  constexpr std::size_t w = V::width;
  const auto va = V::broadcast(a);
  std::size_t i = 0;
  for (; i + w <= n; i += w) V::store(y + i, V::fma(va, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

// Keeps a strip of y in registers while streaming the rows of A.
template <class Real>
void gemv_t_avx2(const Real* x, std::size_t rows, const Real* A, std::size_t cols, Real* y) {
  using V = Vec<Real>;
  constexpr std::size_t w = V::width;
  std::size_t c = 0;
  for (; c + 4 * w <= cols; c += 4 * w) {
    auto y0 = V::load(y + c), y1 = V::load(y + c + w);
    auto y2 = V::load(y + c + 2 * w), y3 = V::load(y + c + 3 * w);
    const Real* col = A + c;
    for (std::size_t r = 0; r < rows; ++r, col += cols) {
      const auto xr = V::broadcast(x[r]);
      y0 = V::fma(xr, V::load(col), y0);
      y1 = V::fma(xr, V::load(col + w), y1);
      y2 = V::fma(xr, V::load(col + 2 * w), y2);
      y3 = V::fma(xr, V::load(col + 3 * w), y3);
    }
    V::store(y + c, y0);
    V::store(y + c + w, y1);
    V::store(y + c + 2 * w, y2);
    V::store(y + c + 3 * w, y3);
  }
  for (; c + w <= cols; c += w) {
    auto y0 = V::load(y + c);
    const Real* col = A + c;
    for (std::size_t r = 0; r < rows; ++r, col += cols) y0 = V::fma(V::broadcast(x[r]), V::load(col), y0);
    V::store(y + c, y0);
  }
  for (; c < cols; ++c) {
    Real acc = y[c];
    for (std::size_t r = 0; r < rows; ++r) acc += x[r] * A[r * cols + c];
    y[c] = acc;
  }
}

template <class Real>
void gemv_avx2(const Real* A, std::size_t rows, std::size_t cols, const Real* g, Real* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += dot_avx2(A + r * cols, g, cols);
}

template <class Real>
void ger_avx2(const Real* x, std::size_t rows, const Real* g, std::size_t cols, Real* A) {
  for (std::size_t r = 0; r < rows; ++r) axpy_avx2(x[r], g, A + r * cols, cols);
}

// 4 x 2w register block of C; B rows are streamed, A entries broadcast.
template <class Real>
void gemm_avx2(const Real* A, const Real* B, Real* C, std::size_t M, std::size_t K, std::size_t N) {
  using V = Vec<Real>;
  constexpr std::size_t w = V::width;
  std::size_t i = 0;
  for (; i + 4 <= M; i += 4) {
    const Real* a0 = A + i * K;
    const Real* a1 = a0 + K;
    const Real* a2 = a1 + K;
    const Real* a3 = a2 + K;
    Real* c0 = C + i * N;
    Real* c1 = c0 + N;
    Real* c2 = c1 + N;
    Real* c3 = c2 + N;
    std::size_t j = 0;
    for (; j + 2 * w <= N; j += 2 * w) {
      auto x00 = V::load(c0 + j), x01 = V::load(c0 + j + w);
      auto x10 = V::load(c1 + j), x11 = V::load(c1 + j + w);
      auto x20 = V::load(c2 + j), x21 = V::load(c2 + j + w);
      auto x30 = V::load(c3 + j), x31 = V::load(c3 + j + w);
      const Real* b = B + j;
      for (std::size_t k = 0; k < K; ++k, b += N) {
        const auto b0 = V::load(b), b1 = V::load(b + w);
        auto s = V::broadcast(a0[k]);
        x00 = V::fma(s, b0, x00);
        x01 = V::fma(s, b1, x01);
        s = V::broadcast(a1[k]);
        x10 = V::fma(s, b0, x10);
        x11 = V::fma(s, b1, x11);
        s = V::broadcast(a2[k]);
        x20 = V::fma(s, b0, x20);
        x21 = V::fma(s, b1, x21);
        s = V::broadcast(a3[k]);
        x30 = V::fma(s, b0, x30);
        x31 = V::fma(s, b1, x31);
      }
      V::store(c0 + j, x00);
      V::store(c0 + j + w, x01);
      V::store(c1 + j, x10);
      V::store(c1 + j + w, x11);
      V::store(c2 + j, x20);
      V::store(c2 + j + w, x21);
      V::store(c3 + j, x30);
      V::store(c3 + j + w, x31);
    }
    for (; j + w <= N; j += w) {
      auto x0 = V::load(c0 + j), x1 = V::load(c1 + j), x2 = V::load(c2 + j), x3 = V::load(c3 + j);
      const Real* b = B + j;
      for (std::size_t k = 0; k < K; ++k, b += N) {
        const auto bv = V::load(b);
        x0 = V::fma(V::broadcast(a0[k]), bv, x0);
        x1 = V::fma(V::broadcast(a1[k]), bv, x1);
        x2 = V::fma(V::broadcast(a2[k]), bv, x2);
        x3 = V::fma(V::broadcast(a3[k]), bv, x3);
      }
      V::store(c0 + j, x0);
      V::store(c1 + j, x1);
      V::store(c2 + j, x2);
      V::store(c3 + j, x3);
    }
    for (; j < N; ++j) {
      Real s0 = c0[j], s1 = c1[j], s2 = c2[j], s3 = c3[j];
      for (std::size_t k = 0; k < K; ++k) {
        const Real bv = B[k * N + j];
        s0 += a0[k] * bv;
        s1 += a1[k] * bv;
        s2 += a2[k] * bv;
        s3 += a3[k] * bv;
      }
      c0[j] = s0;
      c1[j] = s1;
      c2[j] = s2;
      c3[j] = s3;
    }
  }
  for (; i < M; ++i) gemv_t_avx2(A + i * K, K, B, N, C + i * N);
}

template <class Real>
constexpr KernelTable<Real> kAvx2{&dot_avx2<Real>, &axpy_avx2<Real>, &gemv_t_avx2<Real>, &gemv_avx2<Real>,
                                  &ger_avx2<Real>, &gemm_avx2<Real>};

}  // namespace

template <class Real>
const KernelTable<Real>* avx2_table() {
  return &kAvx2<Real>;
}

template const KernelTable<float>* avx2_table<float>();
template const KernelTable<double>* avx2_table<double>();

}  // namespace vidsal::simd::detail

#else

namespace vidsal::simd::detail {
template <class Real>
const KernelTable<Real>* avx2_table() {
  return nullptr;
}
template const KernelTable<float>* avx2_table<float>();
template const KernelTable<double>* avx2_table<double>();
}  // namespace vidsal::simd::detail

#endif
