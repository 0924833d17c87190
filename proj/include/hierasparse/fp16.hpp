// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>

namespace hierasparse {

// Portable IEEE 754 binary16 <-> binary32 conversion.  The toolchain baseline
// (gcc 11 on x86-64) has no _Float16, so pool storage keeps raw half bits in
// uint16_t and converts through these two routines.  float -> half rounds to
// nearest, ties to even, matching hardware convert instructions.

inline std::uint16_t float_to_half_bits(float f) {
    std::uint32_t x;
    std::memcpy(&x, &f, sizeof(x));

    const std::uint16_t sign = static_cast<std::uint16_t>((x >> 16) & 0x8000u);
    const std::uint32_t exp32 = (x >> 23) & 0xffu;
    std::uint32_t mant = x & 0x7fffffu;

    if (exp32 == 0xffu) {
        // Inf / NaN; keep NaN-ness with a quiet payload bit.
        return static_cast<std::uint16_t>(sign | 0x7c00u | (mant ? 0x0200u : 0u));
    }

    // Unbiased exponent of the float value.
    const int e = static_cast<int>(exp32) - 127;

    if (e > 15) {
        // Overflows half range -> infinity.
        return static_cast<std::uint16_t>(sign | 0x7c00u);
    }

    if (e >= -14) {
        // Normal half.  Round the 23-bit mantissa to 10 bits (RNE); a mantissa
        // carry rolls into the exponent naturally (1.1111.. -> 10.000..) and,
        // at e == 15, on into infinity, which is the required result.
        std::uint32_t half = (static_cast<std::uint32_t>(e + 15) << 10) | (mant >> 13);
        const std::uint32_t rest = mant & 0x1fffu;
        if (rest > 0x1000u || (rest == 0x1000u && (half & 1u))) ++half;
        return static_cast<std::uint16_t>(sign | half);
    }

    if (e >= -25) {
        // Subnormal half: the result is round(value / 2^-24) in [0, 0x400].
        // With the implicit 1 made explicit the 24-bit mantissa M satisfies
        // value = M * 2^(e-23), so the quotient is M >> (-e - 1) under RNE.
        // A round-up out of 0x3ff lands on 0x400, the smallest normal, whose
        // encoding is exactly that bit pattern.
        mant |= 0x800000u;
        const int dropped = -e - 1;  // in [14, 24]
        std::uint32_t half = mant >> dropped;
        const std::uint32_t halfway = 1u << (dropped - 1);
        const std::uint32_t rest = mant & ((1u << dropped) - 1u);
        if (rest > halfway || (rest == halfway && (half & 1u))) ++half;
        return static_cast<std::uint16_t>(sign | half);
    }

    // Too small even for the largest subnormal to round up to: signed zero.
    return sign;
}

inline float half_bits_to_float(std::uint16_t h) {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    const std::uint32_t exp16 = (h >> 10) & 0x1fu;
    std::uint32_t mant = h & 0x3ffu;

    std::uint32_t x;
    if (exp16 == 0x1fu) {
        x = sign | 0x7f800000u | (mant << 13);  // inf / NaN
    } else if (exp16 != 0) {
        x = sign | ((exp16 + 112u) << 23) | (mant << 13);  // normal
    } else if (mant != 0) {
        // Subnormal half: normalize into a float, which has plenty of range.
        int e = -1;
        do {
            ++e;
            mant <<= 1;
        } while ((mant & 0x400u) == 0);
        x = sign | (static_cast<std::uint32_t>(113 - 1 - e) << 23) | ((mant & 0x3ffu) << 13);
    } else {
        x = sign;  // signed zero
    }

    float f;
    std::memcpy(&f, &x, sizeof(f));
    return f;
}

// One storage round trip: the value a pool element holds after being written
// as binary16 and read back for compute.
inline float quantize_to_half(float f) { return half_bits_to_float(float_to_half_bits(f)); }

} // namespace hierasparse
