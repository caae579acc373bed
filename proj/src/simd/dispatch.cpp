#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "vidsal/simd/kernels.hpp"

namespace vidsal::simd {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() { return default_isa(); }

std::atomic<Isa>& active_slot() {
  static std::atomic<Isa> slot{initial_isa()};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2: return detail::avx2_table<float>() != nullptr && cpu_has_avx2();
    case Isa::Neon: return detail::neon_table<float>() != nullptr;
  }
  return false;
}

Isa default_isa() {
  if (const char* forced = std::getenv("VIDSAL_SIMD")) {
    const std::string name(forced);
    for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Neon}) {
      if (name == isa_name(isa) && isa_available(isa)) return isa;
    }
  }
  if (isa_available(Isa::Avx2)) return Isa::Avx2;
  if (isa_available(Isa::Neon)) return Isa::Neon;
  return Isa::Scalar;
}

Isa active_isa() { return active_slot().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_available(isa)) {
    throw std::invalid_argument("SIMD variant '" + std::string(isa_name(isa)) + "' is not available");
  }
  active_slot().store(isa, std::memory_order_relaxed);
}

template <class Real>
const KernelTable<Real>& kernels(Isa isa) {
  switch (isa) {
    case Isa::Avx2:
      if (auto* t = detail::avx2_table<Real>(); t && isa_available(isa)) return *t;
      break;
    case Isa::Neon:
      if (auto* t = detail::neon_table<Real>()) return *t;
      break;
    case Isa::Scalar: break;
  }
  return detail::scalar_table<Real>();
}

template <class Real>
const KernelTable<Real>& kernels() {
  return kernels<Real>(active_isa());
}

template const KernelTable<float>& kernels<float>(Isa);
template const KernelTable<double>& kernels<double>(Isa);
template const KernelTable<float>& kernels<float>();
template const KernelTable<double>& kernels<double>();

}  // namespace vidsal::simd
