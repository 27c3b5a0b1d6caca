#pragma once

#include <cmath>
#include <cstddef>

// With RFMFG_SIMD_TRIG defined (GCC + glibc), cos/sin are declared with SIMD
// variants so the batched loops below call libmvec. Link with -lmvec.
#if defined(RFMFG_SIMD_TRIG)
extern "C" {
__attribute__((simd("notinbranch"))) double cos(double) noexcept;
__attribute__((simd("notinbranch"))) double sin(double) noexcept;
}
#endif

namespace rfmfg {

/// c[i] = cos(theta[i]), s[i] = sin(theta[i]).
inline void simd_cos_sin(const double* theta, double* c, double* s, std::size_t n) {
#if defined(RFMFG_SIMD_TRIG)
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) c[i] = ::cos(theta[i]);
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) s[i] = ::sin(theta[i]);
#else
  for (std::size_t i = 0; i < n; ++i) {
    c[i] = std::cos(theta[i]);
    s[i] = std::sin(theta[i]);
  }
#endif
}

}  // namespace rfmfg
