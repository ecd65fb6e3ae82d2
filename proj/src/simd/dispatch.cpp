#include <cstdlib>
#include <cstring>

#include "locex/simd.hpp"

namespace locex::simd {

#if defined(LOCEX_HAVE_AVX2)
const KernelTable& avx2_table() noexcept;
#endif

const KernelTable* avx2_kernels() noexcept {
#if defined(LOCEX_HAVE_AVX2)
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return supported ? &avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active_kernels() noexcept {
  static const KernelTable& table = []() -> const KernelTable& {
    const char* forced = std::getenv("LOCEX_SIMD");
    if (forced != nullptr && std::strcmp(forced, "scalar") == 0) return scalar_kernels();
    if (const KernelTable* avx = avx2_kernels()) return *avx;
    return scalar_kernels();
  }();
  return table;
}

}  // namespace locex::simd
