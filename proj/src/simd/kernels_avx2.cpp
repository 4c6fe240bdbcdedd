#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include "metaplan/simd/kernels.hpp"

namespace metaplan::simd::avx2 {

namespace {

__attribute__((target("avx2"))) inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

}  // namespace

// Two independent accumulators of four lanes each; no FMA so that products
// round exactly as in the scalar reference.
__attribute__((target("avx2"))) double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4)));
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  double sum = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

__attribute__((target("avx2"))) void dot_many(const double* q, const double* rows, std::size_t dim,
                                              double* out, std::size_t count) {
  for (std::size_t r = 0; r < count; ++r) out[r] = dot(q, rows + r * dim, dim);
}

}  // namespace metaplan::simd::avx2

#endif
