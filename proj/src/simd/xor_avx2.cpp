// Compiled with -mavx2; only reached after a runtime CPU check.
#include "dissent/simd/xor.hpp"

#if defined(__AVX2__)
#include <immintrin.h>

namespace dissent::simd::detail {

void xor_into_avx2(std::uint8_t* dst, const std::uint8_t* src, std::size_t n) {
  std::size_t i = 0;
  for (; i + 128 <= n; i += 128) {
    __m256i a0 = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(dst + i));
    __m256i a1 = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(dst + i + 32));
    __m256i a2 = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(dst + i + 64));
    __m256i a3 = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(dst + i + 96));
    a0 = _mm256_xor_si256(a0, _mm256_loadu_si256(reinterpret_cast<const __m256i*>(src + i)));
    a1 = _mm256_xor_si256(a1, _mm256_loadu_si256(reinterpret_cast<const __m256i*>(src + i + 32)));
    a2 = _mm256_xor_si256(a2, _mm256_loadu_si256(reinterpret_cast<const __m256i*>(src + i + 64)));
    a3 = _mm256_xor_si256(a3, _mm256_loadu_si256(reinterpret_cast<const __m256i*>(src + i + 96)));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + i), a0);
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + i + 32), a1);
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + i + 64), a2);
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + i + 96), a3);
  }
  for (; i + 32 <= n; i += 32) {
    __m256i a = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(dst + i));
    a = _mm256_xor_si256(a, _mm256_loadu_si256(reinterpret_cast<const __m256i*>(src + i)));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + i), a);
  }
  xor_into_scalar(dst + i, src + i, n - i);
}

}  // namespace dissent::simd::detail

#else

namespace dissent::simd::detail {
void xor_into_avx2(std::uint8_t* dst, const std::uint8_t* src, std::size_t n) { xor_into_scalar(dst, src, n); }
}  // namespace dissent::simd::detail

#endif
