#include "vidsal/simd/kernels.hpp"

namespace vidsal::simd::detail {
namespace {

template <class Real>
Real dot_scalar(const Real* x, const Real* y, std::size_t n) {
  Real acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <class Real>
void axpy_scalar(Real a, const Real* x, Real* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class Real>
void gemv_t_scalar(const Real* x, std::size_t rows, const Real* A, std::size_t cols, Real* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const Real xr = x[r];
    const Real* row = A + r * cols;
    for (std::size_t c = 0; c < cols; ++c) y[c] += xr * row[c];
  }
}

template <class Real>
void gemv_scalar(const Real* A, std::size_t rows, std::size_t cols, const Real* g, Real* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += dot_scalar(A + r * cols, g, cols);
}

template <class Real>
void ger_scalar(const Real* x, std::size_t rows, const Real* g, std::size_t cols, Real* A) {
  for (std::size_t r = 0; r < rows; ++r) axpy_scalar(x[r], g, A + r * cols, cols);
}

template <class Real>
void gemm_scalar(const Real* A, const Real* B, Real* C, std::size_t M, std::size_t K, std::size_t N) {
  for (std::size_t i = 0; i < M; ++i) gemv_t_scalar(A + i * K, K, B, N, C + i * N);
}

template <class Real>
constexpr KernelTable<Real> kScalar{&dot_scalar<Real>, &axpy_scalar<Real>, &gemv_t_scalar<Real>,
                                    &gemv_scalar<Real>, &ger_scalar<Real>, &gemm_scalar<Real>};

}  // namespace

template <class Real>
const KernelTable<Real>& scalar_table() {
  return kScalar<Real>;
}

template const KernelTable<float>& scalar_table<float>();
template const KernelTable<double>& scalar_table<double>();

}  // namespace vidsal::simd::detail
