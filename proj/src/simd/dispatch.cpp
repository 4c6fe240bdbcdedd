#include <atomic>
#include <stdexcept>

#include "metaplan/simd/kernels.hpp"

namespace metaplan::simd {

namespace {

Isa detect() {
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx2")) return Isa::Avx2;
#endif
#if defined(__aarch64__)
  return Isa::Neon;
#endif
  return Isa::Scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "?";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::Neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

bool force_isa(Isa isa) {
  if (!isa_available(isa)) return false;
  current().store(isa, std::memory_order_relaxed);
  return true;
}

void reset_isa() { current().store(detect(), std::memory_order_relaxed); }

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  switch (active_isa()) {
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::Avx2: return avx2::dot(a.data(), b.data(), a.size());
#endif
#if defined(__aarch64__)
    case Isa::Neon: return neon::dot(a.data(), b.data(), a.size());
#endif
    default: return scalar::dot(a.data(), b.data(), a.size());
  }
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

void dot_many(std::span<const double> query, std::span<const double> rows, std::span<double> out) {
  const std::size_t dim = query.size();
  if (rows.size() != out.size() * dim) throw std::invalid_argument("dot_many: shape mismatch");
  switch (active_isa()) {
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::Avx2: avx2::dot_many(query.data(), rows.data(), dim, out.data(), out.size()); return;
#endif
#if defined(__aarch64__)
    case Isa::Neon: neon::dot_many(query.data(), rows.data(), dim, out.data(), out.size()); return;
#endif
    default: scalar::dot_many(query.data(), rows.data(), dim, out.data(), out.size()); return;
  }
}

}  // namespace metaplan::simd
