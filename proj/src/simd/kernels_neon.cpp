#include "vidsal/simd/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>

namespace vidsal::simd::detail {
namespace {

template <class Real>
struct Vec;

template <>
struct Vec<float> {
  using type = float32x4_t;
  static constexpr std::size_t width = 4;
  static type zero() { return vdupq_n_f32(0.0f); }
  static type load(const float* p) { return vld1q_f32(p); }
  static void store(float* p, type v) { vst1q_f32(p, v); }
  static type broadcast(float a) { return vdupq_n_f32(a); }
  static type fma(type a, type b, type c) { return vfmaq_f32(c, a, b); }
  static float sum(type v) { return vaddvq_f32(v); }
};

template <>
struct Vec<double> {
  using type = float64x2_t;
  static constexpr std::size_t width = 2;
  static type zero() { return vdupq_n_f64(0.0); }
  static type load(const double* p) { return vld1q_f64(p); }
  static void store(double* p, type v) { vst1q_f64(p, v); }
  static type broadcast(double a) { return vdupq_n_f64(a); }
  static type fma(type a, type b, type c) { return vfmaq_f64(c, a, b); }
  static double sum(type v) { return vaddvq_f64(v); }
};

template <class Real>
Real dot_neon(const Real* x, const Real* y, std::size_t n) {
  using V = Vec<Real>;
  auto acc = V::zero();
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) acc = V::fma(V::load(x + i), V::load(y + i), acc);
  Real s = V::sum(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <class Real>
void axpy_neon(Real a, const Real* x, Real* y, std::size_t n) {
  using V = Vec<Real>;
  const auto va = V::broadcast(a);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) V::store(y + i, V::fma(va, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

template <class Real>
void gemv_t_neon(const Real* x, std::size_t rows, const Real* A, std::size_t cols, Real* y) {
  for (std::size_t r = 0; r < rows; ++r) axpy_neon(x[r], A + r * cols, y, cols);
}

template <class Real>
void gemv_neon(const Real* A, std::size_t rows, std::size_t cols, const Real* g, Real* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += dot_neon(A + r * cols, g, cols);
}

template <class Real>
void ger_neon(const Real* x, std::size_t rows, const Real* g, std::size_t cols, Real* A) {
  for (std::size_t r = 0; r < rows; ++r) axpy_neon(x[r], g, A + r * cols, cols);
}

// Four rows of C at a time against one vector strip of B.
template <class Real>
void gemm_neon(const Real* A, const Real* B, Real* C, std::size_t M, std::size_t K, std::size_t N) {
  using V = Vec<Real>;
  constexpr std::size_t w = V::width;
  std::size_t i = 0;
  for (; i + 4 <= M; i += 4) {
    std::size_t j = 0;
    for (; j + w <= N; j += w) {
      auto c0 = V::load(C + i * N + j), c1 = V::load(C + (i + 1) * N + j);
      auto c2 = V::load(C + (i + 2) * N + j), c3 = V::load(C + (i + 3) * N + j);
      for (std::size_t k = 0; k < K; ++k) {
        const auto b = V::load(B + k * N + j);
        c0 = V::fma(V::broadcast(A[i * K + k]), b, c0);
        c1 = V::fma(V::broadcast(A[(i + 1) * K + k]), b, c1);
        c2 = V::fma(V::broadcast(A[(i + 2) * K + k]), b, c2);
        c3 = V::fma(V::broadcast(A[(i + 3) * K + k]), b, c3);
      }
      V::store(C + i * N + j, c0);
      V::store(C + (i + 1) * N + j, c1);
      V::store(C + (i + 2) * N + j, c2);
      V::store(C + (i + 3) * N + j, c3);
    }
    for (; j < N; ++j)
      for (std::size_t r = i; r < i + 4; ++r) {
        Real acc = C[r * N + j];
        for (std::size_t k = 0; k < K; ++k) acc += A[r * K + k] * B[k * N + j];
        C[r * N + j] = acc;
      }
  }
  for (; i < M; ++i) gemv_t_neon(A + i * K, K, B, N, C + i * N);
}

template <class Real>
constexpr KernelTable<Real> kNeon{&dot_neon<Real>, &axpy_neon<Real>, &gemv_t_neon<Real>, &gemv_neon<Real>,
                                  &ger_neon<Real>, &gemm_neon<Real>};

}  // namespace

template <class Real>
const KernelTable<Real>* neon_table() {
  return &kNeon<Real>;
}

template const KernelTable<float>* neon_table<float>();
template const KernelTable<double>* neon_table<double>();

}  // namespace vidsal::simd::detail

#else

namespace vidsal::simd::detail {
template <class Real>
const KernelTable<Real>* neon_table() {
  return nullptr;
}
template const KernelTable<float>* neon_table<float>();
template const KernelTable<double>* neon_table<double>();
}  // namespace vidsal::simd::detail

#endif
