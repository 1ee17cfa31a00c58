#include <algorithm>
#include <stdexcept>

#include "dissent/simd/xor.hpp"

namespace dissent::simd {

namespace {

using Kernel = void (*)(std::uint8_t*, const std::uint8_t*, std::size_t);

bool cpu_has(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::sse2: return true;
#if defined(DISSENT_HAVE_AVX2_KERNEL)
    case Isa::avx2: return __builtin_cpu_supports("avx2");
#endif
#endif
#if defined(__aarch64__)
    case Isa::neon: return true;
#endif
    default: return false;
  }
}

Kernel kernel_for(Isa isa) {
  switch (isa) {
    case Isa::scalar: return detail::xor_into_scalar;
    case Isa::sse2: return detail::xor_into_sse2;
    case Isa::avx2: return detail::xor_into_avx2;
    case Isa::neon: return detail::xor_into_neon;
  }
  return detail::xor_into_scalar;
}

Kernel active_kernel() {
  static const Kernel k = kernel_for(detected_isa());
  return k;
}

}  // namespace

const char* to_string(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::sse2: return "sse2";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::scalar, Isa::sse2, Isa::avx2, Isa::neon})
    if (cpu_has(isa)) out.push_back(isa);
  return out;
}

Isa detected_isa() {
  static const Isa best = available_isas().back();
  return best;
}

void xor_into(Isa isa, std::span<std::uint8_t> dst, std::span<const std::uint8_t> src) {
  if (dst.size() != src.size()) throw std::invalid_argument("xor_into: length mismatch");
  if (!cpu_has(isa)) throw std::invalid_argument("xor_into: ISA not available on this CPU");
  kernel_for(isa)(dst.data(), src.data(), dst.size());
}

void xor_into(std::span<std::uint8_t> dst, std::span<const std::uint8_t> src) {
  if (dst.size() != src.size()) throw std::invalid_argument("xor_into: length mismatch");
  active_kernel()(dst.data(), src.data(), dst.size());
}

void xor_fold(std::span<std::uint8_t> dst, std::span<const std::span<const std::uint8_t>> sources) {
  std::fill(dst.begin(), dst.end(), std::uint8_t{0});
  for (auto s : sources) xor_into(dst, s);
}

}  // namespace dissent::simd
