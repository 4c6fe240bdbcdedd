#include "metaplan/simd/kernels.hpp"

namespace metaplan::simd::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void dot_many(const double* q, const double* rows, std::size_t dim, double* out, std::size_t count) {
  for (std::size_t r = 0; r < count; ++r) out[r] = dot(q, rows + r * dim, dim);
}

}  // namespace metaplan::simd::scalar
