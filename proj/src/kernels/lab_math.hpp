#pragma once

#include <bit>
#include <cstdint>

// Constants and the scalar per-pixel sRGB -> rounded-Lab routine shared by
// the scalar table and the AVX2 tail path. The operation order here is the
// contract: the AVX2 body mirrors it instruction for instruction so both
// variants are bit-identical.

namespace geomat::kernels::detail {

// sRGB -> XYZ (D65) rows, premultiplied by the reference-white reciprocal.
inline constexpr float kXR = float(0.4124564 / 0.95047);
inline constexpr float kXG = float(0.3575761 / 0.95047);
inline constexpr float kXB = float(0.1804375 / 0.95047);
inline constexpr float kYR = float(0.2126729);
inline constexpr float kYG = float(0.7151522);
inline constexpr float kYB = float(0.0721750);
inline constexpr float kZR = float(0.0193339 / 1.08883);
inline constexpr float kZG = float(0.1191920 / 1.08883);
inline constexpr float kZB = float(0.9503041 / 1.08883);

inline constexpr float kLabCut = float(0.008856451679035631);  // (6/29)^3
inline constexpr float kLabSlope = float(841.0 / 108.0);
inline constexpr float kLabOffset = float(4.0 / 29.0);
inline constexpr std::uint32_t kCbrtMagic = 0x2a514067u;

// Newton cube root seeded by an exponent bit trick. The integer division by
// three runs through float so the AVX2 variant can express the identical
// operation sequence without integer division.
inline float cbrt_newton(float t) {
    std::uint32_t u = std::bit_cast<std::uint32_t>(t);
    float uf = float(std::int32_t(u));
    float v = uf / 3.0f;
    std::uint32_t w = std::uint32_t(std::int32_t(v));
    float y = std::bit_cast<float>(w + kCbrtMagic);
    for (int i = 0; i < 4; ++i) {
        float yy = y * y;
        float q = t / yy;
        float s = y + y;
        s += q;
        y = s / 3.0f;
    }
    return y;
}

inline float lab_f(float t) {
    float cb = cbrt_newton(t);
    float lin = t * kLabSlope;
    lin += kLabOffset;
    return t > kLabCut ? cb : lin;
}

inline int clamp_i(int v, int lo, int hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

inline std::int32_t lab_key_pixel(std::uint8_t r, std::uint8_t g, std::uint8_t b,
                                  const float* lut) {
    float lr = lut[r];
    float lg = lut[g];
    float lb = lut[b];

    float tx = lr * kXR;
    tx += lg * kXG;
    tx += lb * kXB;
    float ty = lr * kYR;
    ty += lg * kYG;
    ty += lb * kYB;
    float tz = lr * kZR;
    tz += lg * kZG;
    tz += lb * kZB;

    float fx = lab_f(tx);
    float fy = lab_f(ty);
    float fz = lab_f(tz);

    float lum = 116.0f * fy;
    lum -= 16.0f;
    float av = fx - fy;
    av *= 500.0f;
    float bv = fy - fz;
    bv *= 200.0f;

    int li = int(__builtin_floorf(lum + 0.5f));
    int ai = int(__builtin_floorf(av + 0.5f));
    int bi = int(__builtin_floorf(bv + 0.5f));
    li = clamp_i(li, 0, 511);
    ai = clamp_i(ai, -128, 127);
    bi = clamp_i(bi, -128, 127);
    return std::int32_t((li << 18) | ((ai + 128) << 9) | (bi + 128));
}

}  // namespace geomat::kernels::detail
