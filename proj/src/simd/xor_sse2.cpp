#include "dissent/simd/xor.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <emmintrin.h>

namespace dissent::simd::detail {

void xor_into_sse2(std::uint8_t* dst, const std::uint8_t* src, std::size_t n) {
  std::size_t i = 0;
  for (; i + 64 <= n; i += 64) {
    __m128i a0 = _mm_loadu_si128(reinterpret_cast<const __m128i*>(dst + i));
    __m128i a1 = _mm_loadu_si128(reinterpret_cast<const __m128i*>(dst + i + 16));
    __m128i a2 = _mm_loadu_si128(reinterpret_cast<const __m128i*>(dst + i + 32));
    __m128i a3 = _mm_loadu_si128(reinterpret_cast<const __m128i*>(dst + i + 48));
    a0 = _mm_xor_si128(a0, _mm_loadu_si128(reinterpret_cast<const __m128i*>(src + i)));
    a1 = _mm_xor_si128(a1, _mm_loadu_si128(reinterpret_cast<const __m128i*>(src + i + 16)));
    a2 = _mm_xor_si128(a2, _mm_loadu_si128(reinterpret_cast<const __m128i*>(src + i + 32)));
    a3 = _mm_xor_si128(a3, _mm_loadu_si128(reinterpret_cast<const __m128i*>(src + i + 48)));
    _mm_storeu_si128(reinterpret_cast<__m128i*>(dst + i), a0);
    _mm_storeu_si128(reinterpret_cast<__m128i*>(dst + i + 16), a1);
    _mm_storeu_si128(reinterpret_cast<__m128i*>(dst + i + 32), a2);
    _mm_storeu_si128(reinterpret_cast<__m128i*>(dst + i + 48), a3);
  }
  for (; i + 16 <= n; i += 16) {
    __m128i a = _mm_loadu_si128(reinterpret_cast<const __m128i*>(dst + i));
    a = _mm_xor_si128(a, _mm_loadu_si128(reinterpret_cast<const __m128i*>(src + i)));
    _mm_storeu_si128(reinterpret_cast<__m128i*>(dst + i), a);
  }
  xor_into_scalar(dst + i, src + i, n - i);
}

}  // namespace dissent::simd::detail

#else

namespace dissent::simd::detail {
void xor_into_sse2(std::uint8_t* dst, const std::uint8_t* src, std::size_t n) { xor_into_scalar(dst, src, n); }
}  // namespace dissent::simd::detail

#endif
