#include "dissent/simd/xor.hpp"

#if defined(__aarch64__) || defined(__ARM_NEON)
#include <arm_neon.h>

namespace dissent::simd::detail {

void xor_into_neon(std::uint8_t* dst, const std::uint8_t* src, std::size_t n) {
  std::size_t i = 0;
  for (; i + 64 <= n; i += 64) {
    uint8x16x4_t a = vld1q_u8_x4(dst + i);
    uint8x16x4_t b = vld1q_u8_x4(src + i);
    a.val[0] = veorq_u8(a.val[0], b.val[0]);
    a.val[1] = veorq_u8(a.val[1], b.val[1]);
    a.val[2] = veorq_u8(a.val[2], b.val[2]);
    a.val[3] = veorq_u8(a.val[3], b.val[3]);
    vst1q_u8_x4(dst + i, a);
  }
  for (; i + 16 <= n; i += 16) vst1q_u8(dst + i, veorq_u8(vld1q_u8(dst + i), vld1q_u8(src + i)));
  xor_into_scalar(dst + i, src + i, n - i);
}

}  // namespace dissent::simd::detail

#else

namespace dissent::simd::detail {
void xor_into_neon(std::uint8_t* dst, const std::uint8_t* src, std::size_t n) { xor_into_scalar(dst, src, n); }
}  // namespace dissent::simd::detail

#endif
