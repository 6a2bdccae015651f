#include <cstdlib>
#include <cstring>

#include "gpode/simd/kernels.hpp"

namespace gpode::simd {

#ifdef GPODE_HAVE_AVX2
const KernelTable& avx2_table();
#endif

const KernelTable* avx2_kernels() {
#ifdef GPODE_HAVE_AVX2
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& kernels() {
  static const KernelTable* chosen = [] {
    const char* env = std::getenv("GPODE_SIMD");
    if (env && std::strcmp(env, "scalar") == 0) return &scalar_kernels();
    const KernelTable* fast = avx2_kernels();
    return fast ? fast : &scalar_kernels();
  }();
  return *chosen;
}

}  // namespace gpode::simd
