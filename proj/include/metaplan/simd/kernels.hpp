#pragma once

// Dense inner-product kernels behind the embedding similarity path.
//
// Each kernel has a scalar reference in `scalar::` and vectorized variants
// compiled per target (AVX2 on x86-64, NEON on aarch64). The free functions
// in `metaplan::simd` dispatch once, at first use, to the best variant the CPU
// supports; `force_isa` pins a variant for equivalence tests.

#include <cstddef>
#include <span>
#include <string_view>

namespace metaplan::simd {

enum class Isa { Scalar, Avx2, Neon };

std::string_view isa_name(Isa isa);

/// True when the variant is compiled in and the running CPU supports it.
bool isa_available(Isa isa);

/// The variant used by the dispatched entry points.
Isa active_isa();

/// Pins the dispatched variant. Returns false (and changes nothing) when the
/// variant is unavailable.
bool force_isa(Isa isa);

/// Restores automatic selection.
void reset_isa();

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

/// out[r] = dot(query, rows[r*dim .. r*dim+dim)). rows.size() must be out.size()*dim.
void dot_many(std::span<const double> query, std::span<const double> rows, std::span<double> out);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void dot_many(const double* q, const double* rows, std::size_t dim, double* out, std::size_t count);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void dot_many(const double* q, const double* rows, std::size_t dim, double* out, std::size_t count);
}  // namespace avx2
#endif

#if defined(__aarch64__)
namespace neon {
double dot(const double* a, const double* b, std::size_t n);
void dot_many(const double* q, const double* rows, std::size_t dim, double* out, std::size_t count);
}  // namespace neon
#endif

}  // namespace metaplan::simd
