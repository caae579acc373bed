#pragma once

// Dense inner-loop kernels used by convolution and linear layers.
//
// Every kernel has a portable scalar reference implementation and, where the
// target supports it, a vectorized variant (AVX2+FMA on x86-64, NEON on
// AArch64). The active table is chosen once at startup from the CPU features;
// the environment variable VIDSAL_SIMD=scalar|avx2|neon forces a choice.

#include <cstddef>
#include <string_view>

namespace vidsal::simd {

enum class Isa { Scalar, Avx2, Neon };

std::string_view isa_name(Isa isa);

// All matrices are row-major with `cols` contiguous elements per row.
template <class Real>
struct KernelTable {
  // returns sum_i x[i] * y[i]
  Real (*dot)(const Real* x, const Real* y, std::size_t n);
  // y[i] += a * x[i]
  void (*axpy)(Real a, const Real* x, Real* y, std::size_t n);
  // y[c] += sum_r x[r] * A[r, c]          (y has `cols` entries)
  void (*gemv_t)(const Real* x, std::size_t rows, const Real* A, std::size_t cols, Real* y);
  // y[r] += sum_c A[r, c] * g[c]          (y has `rows` entries)
  void (*gemv)(const Real* A, std::size_t rows, std::size_t cols, const Real* g, Real* y);
  // A[r, c] += x[r] * g[c]
  void (*ger)(const Real* x, std::size_t rows, const Real* g, std::size_t cols, Real* A);
  // C[M, N] += A[M, K] * B[K, N]
  void (*gemm)(const Real* A, const Real* B, Real* C, std::size_t M, std::size_t K, std::size_t N);
};

bool isa_available(Isa isa);

// Best available ISA, or the one forced through VIDSAL_SIMD.
Isa default_isa();

Isa active_isa();

// Switches the process-wide table. Throws std::invalid_argument when the ISA
// is not available on this machine. Not thread-safe against running kernels.
void set_active_isa(Isa isa);

template <class Real>
const KernelTable<Real>& kernels(Isa isa);

template <class Real>
const KernelTable<Real>& kernels();

namespace detail {
template <class Real>
const KernelTable<Real>& scalar_table();
template <class Real>
const KernelTable<Real>* avx2_table();  // nullptr when not compiled in
template <class Real>
const KernelTable<Real>* neon_table();
}  // namespace detail

}  // namespace vidsal::simd
