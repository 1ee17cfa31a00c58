#pragma once

// XOR kernels behind the DC-net slot arithmetic. One scalar reference plus
// vector variants; the dispatching entry points pick the widest ISA the CPU
// reports at first use.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dissent::simd {

enum class Isa { scalar, sse2, avx2, neon };

const char* to_string(Isa isa);

// Widest ISA that is both compiled in and supported by the running CPU.
Isa detected_isa();
// ISAs usable on this machine, scalar first.
std::vector<Isa> available_isas();

// dst[i] ^= src[i]. The spans must have equal length.
void xor_into(std::span<std::uint8_t> dst, std::span<const std::uint8_t> src);
void xor_into(Isa isa, std::span<std::uint8_t> dst, std::span<const std::uint8_t> src);

// dst = XOR of all sources; every source must have dst's length.
void xor_fold(std::span<std::uint8_t> dst, std::span<const std::span<const std::uint8_t>> sources);

namespace detail {
void xor_into_scalar(std::uint8_t* dst, const std::uint8_t* src, std::size_t n);
void xor_into_sse2(std::uint8_t* dst, const std::uint8_t* src, std::size_t n);
void xor_into_avx2(std::uint8_t* dst, const std::uint8_t* src, std::size_t n);
void xor_into_neon(std::uint8_t* dst, const std::uint8_t* src, std::size_t n);
}  // namespace detail

}  // namespace dissent::simd
