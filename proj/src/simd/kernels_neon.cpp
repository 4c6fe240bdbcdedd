#if defined(__aarch64__)

#include <arm_neon.h>

#include "metaplan/simd/kernels.hpp"

namespace metaplan::simd::neon {

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vaddq_f64(acc0, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    acc1 = vaddq_f64(acc1, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
  }
  double sum = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void dot_many(const double* q, const double* rows, std::size_t dim, double* out, std::size_t count) {
  for (std::size_t r = 0; r < count; ++r) out[r] = dot(q, rows + r * dim, dim);
}

}  // namespace metaplan::simd::neon

#endif
