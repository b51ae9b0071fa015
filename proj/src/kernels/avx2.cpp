#include "geomat/kernels.hpp"

#if defined(__AVX2__)

#include <immintrin.h>

#include <limits>

#include "lab_math.hpp"

namespace geomat::kernels {
namespace {

void project_points_avx2(const float* xs, const float* ys, const float* zs,
                         std::size_t n, const ProjectParams& p,
                         float* sx, float* sy, float* depth) {
    const __m256 x0 = _mm256_set1_ps(p.row_x[0]), x1 = _mm256_set1_ps(p.row_x[1]),
                 x2 = _mm256_set1_ps(p.row_x[2]), x3 = _mm256_set1_ps(p.row_x[3]);
    const __m256 y0 = _mm256_set1_ps(p.row_y[0]), y1 = _mm256_set1_ps(p.row_y[1]),
                 y2 = _mm256_set1_ps(p.row_y[2]), y3 = _mm256_set1_ps(p.row_y[3]);
    const __m256 z0 = _mm256_set1_ps(p.row_z[0]), z1 = _mm256_set1_ps(p.row_z[1]),
                 z2 = _mm256_set1_ps(p.row_z[2]), z3 = _mm256_set1_ps(p.row_z[3]);
    const __m256 cx = _mm256_set1_ps(p.center_x), cy = _mm256_set1_ps(p.center_y);

    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 px = _mm256_loadu_ps(xs + i);
        __m256 py = _mm256_loadu_ps(ys + i);
        __m256 pz = _mm256_loadu_ps(zs + i);

        __m256 zc = _mm256_mul_ps(z0, px);
        zc = _mm256_add_ps(zc, _mm256_mul_ps(z1, py));
        zc = _mm256_add_ps(zc, _mm256_mul_ps(z2, pz));
        zc = _mm256_add_ps(zc, z3);

        __m256 xv = _mm256_mul_ps(x0, px);
        xv = _mm256_add_ps(xv, _mm256_mul_ps(x1, py));
        xv = _mm256_add_ps(xv, _mm256_mul_ps(x2, pz));
        xv = _mm256_add_ps(xv, x3);

        __m256 yv = _mm256_mul_ps(y0, px);
        yv = _mm256_add_ps(yv, _mm256_mul_ps(y1, py));
        yv = _mm256_add_ps(yv, _mm256_mul_ps(y2, pz));
        yv = _mm256_add_ps(yv, y3);

        _mm256_storeu_ps(sx + i, _mm256_add_ps(_mm256_div_ps(xv, zc), cx));
        _mm256_storeu_ps(sy + i, _mm256_sub_ps(cy, _mm256_div_ps(yv, zc)));
        _mm256_storeu_ps(depth + i, zc);
    }
    if (i < n) {
        scalar_table().project_points(xs + i, ys + i, zs + i, n - i, p,
                                      sx + i, sy + i, depth + i);
    }
}

inline __m256 lab_f_avx2(__m256 t) {
    // cbrt seed: same float-routed integer divide by 3 as the scalar path.
    __m256i u = _mm256_castps_si256(t);
    __m256 uf = _mm256_cvtepi32_ps(u);
    __m256 v = _mm256_div_ps(uf, _mm256_set1_ps(3.0f));
    __m256i w = _mm256_cvttps_epi32(v);
    __m256 y = _mm256_castsi256_ps(
        _mm256_add_epi32(w, _mm256_set1_epi32(int(detail::kCbrtMagic))));
    for (int it = 0; it < 4; ++it) {
        __m256 yy = _mm256_mul_ps(y, y);
        __m256 q = _mm256_div_ps(t, yy);
        __m256 s = _mm256_add_ps(y, y);
        s = _mm256_add_ps(s, q);
        y = _mm256_div_ps(s, _mm256_set1_ps(3.0f));
    }
    __m256 lin = _mm256_mul_ps(t, _mm256_set1_ps(detail::kLabSlope));
    lin = _mm256_add_ps(lin, _mm256_set1_ps(detail::kLabOffset));
    __m256 gt = _mm256_cmp_ps(t, _mm256_set1_ps(detail::kLabCut), _CMP_GT_OQ);
    return _mm256_blendv_ps(lin, y, gt);
}

inline __m256i round_clamp_avx2(__m256 x, int lo, int hi) {
    __m256 r = _mm256_floor_ps(_mm256_add_ps(x, _mm256_set1_ps(0.5f)));
    __m256i ri = _mm256_cvttps_epi32(r);
    ri = _mm256_max_epi32(ri, _mm256_set1_epi32(lo));
    ri = _mm256_min_epi32(ri, _mm256_set1_epi32(hi));
    return ri;
}

void srgb_to_lab_keys_avx2(const std::uint8_t* rgb, std::size_t n,
                           std::uint8_t bg_r, std::uint8_t bg_g,
                           std::uint8_t bg_b, std::int32_t* keys) {
    const float* lut = srgb_linear_lut();
    const int* base = reinterpret_cast<const int*>(rgb);
    const __m256i lane_off = _mm256_setr_epi32(0, 3, 6, 9, 12, 15, 18, 21);
    const __m256i byte_mask = _mm256_set1_epi32(0xff);
    const __m256i bgr = _mm256_set1_epi32(bg_r);
    const __m256i bgg = _mm256_set1_epi32(bg_g);
    const __m256i bgb = _mm256_set1_epi32(bg_b);

    std::size_t i = 0;
    // The last gather reads 4 bytes at offset 3*(i+7)+2, so stop 9 pixels
    // before the end and let the scalar path finish.
    for (; i + 9 <= n; i += 8) {
        __m256i off = _mm256_add_epi32(_mm256_set1_epi32(int(3 * i)), lane_off);
        __m256i r = _mm256_and_si256(_mm256_i32gather_epi32(base, off, 1), byte_mask);
        __m256i g = _mm256_and_si256(
            _mm256_i32gather_epi32(base, _mm256_add_epi32(off, _mm256_set1_epi32(1)), 1),
            byte_mask);
        __m256i b = _mm256_and_si256(
            _mm256_i32gather_epi32(base, _mm256_add_epi32(off, _mm256_set1_epi32(2)), 1),
            byte_mask);

        __m256i bg = _mm256_and_si256(_mm256_cmpeq_epi32(r, bgr),
                                      _mm256_and_si256(_mm256_cmpeq_epi32(g, bgg),
                                                       _mm256_cmpeq_epi32(b, bgb)));

        __m256 lr = _mm256_i32gather_ps(lut, r, 4);
        __m256 lg = _mm256_i32gather_ps(lut, g, 4);
        __m256 lb = _mm256_i32gather_ps(lut, b, 4);

        __m256 tx = _mm256_mul_ps(lr, _mm256_set1_ps(detail::kXR));
        tx = _mm256_add_ps(tx, _mm256_mul_ps(lg, _mm256_set1_ps(detail::kXG)));
        tx = _mm256_add_ps(tx, _mm256_mul_ps(lb, _mm256_set1_ps(detail::kXB)));
        __m256 ty = _mm256_mul_ps(lr, _mm256_set1_ps(detail::kYR));
        ty = _mm256_add_ps(ty, _mm256_mul_ps(lg, _mm256_set1_ps(detail::kYG)));
        ty = _mm256_add_ps(ty, _mm256_mul_ps(lb, _mm256_set1_ps(detail::kYB)));
        __m256 tz = _mm256_mul_ps(lr, _mm256_set1_ps(detail::kZR));
        tz = _mm256_add_ps(tz, _mm256_mul_ps(lg, _mm256_set1_ps(detail::kZG)));
        tz = _mm256_add_ps(tz, _mm256_mul_ps(lb, _mm256_set1_ps(detail::kZB)));

        __m256 fx = lab_f_avx2(tx);
        __m256 fy = lab_f_avx2(ty);
        __m256 fz = lab_f_avx2(tz);

        __m256 lum = _mm256_mul_ps(_mm256_set1_ps(116.0f), fy);
        lum = _mm256_sub_ps(lum, _mm256_set1_ps(16.0f));
        __m256 av = _mm256_sub_ps(fx, fy);
        av = _mm256_mul_ps(av, _mm256_set1_ps(500.0f));
        __m256 bv = _mm256_sub_ps(fy, fz);
        bv = _mm256_mul_ps(bv, _mm256_set1_ps(200.0f));

        __m256i li = round_clamp_avx2(lum, 0, 511);
        __m256i ai = round_clamp_avx2(av, -128, 127);
        __m256i bi = round_clamp_avx2(bv, -128, 127);

        __m256i key = _mm256_slli_epi32(li, 18);
        key = _mm256_or_si256(
            key, _mm256_slli_epi32(_mm256_add_epi32(ai, _mm256_set1_epi32(128)), 9));
        key = _mm256_or_si256(key, _mm256_add_epi32(bi, _mm256_set1_epi32(128)));
        key = _mm256_blendv_epi8(key, _mm256_set1_epi32(-1), bg);

        _mm256_storeu_si256(reinterpret_cast<__m256i*>(keys + i), key);
    }
    if (i < n) {
        scalar_table().srgb_to_lab_keys(rgb + 3 * i, n - i, bg_r, bg_g, bg_b, keys + i);
    }
}

MinMaxCount zbuf_minmax_avx2(const float* zbuf, std::size_t n) {
    const float inf = std::numeric_limits<float>::infinity();
    __m256 vmin = _mm256_set1_ps(inf);
    __m256 vmax = _mm256_set1_ps(-inf);
    const __m256 vinf = _mm256_set1_ps(inf);
    std::size_t count = 0;

    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 v = _mm256_loadu_ps(zbuf + i);
        __m256 fg = _mm256_cmp_ps(v, vinf, _CMP_LT_OQ);
        count += std::size_t(__builtin_popcount(unsigned(_mm256_movemask_ps(fg))));
        vmin = _mm256_min_ps(vmin, _mm256_blendv_ps(vinf, v, fg));
        vmax = _mm256_max_ps(vmax, _mm256_blendv_ps(_mm256_set1_ps(-inf), v, fg));
    }
    float mins[8], maxs[8];
    _mm256_storeu_ps(mins, vmin);
    _mm256_storeu_ps(maxs, vmax);
    MinMaxCount r{inf, -inf, count};
    for (int k = 0; k < 8; ++k) {
        r.min = mins[k] < r.min ? mins[k] : r.min;
        r.max = maxs[k] > r.max ? maxs[k] : r.max;
    }
    for (; i < n; ++i) {
        float v = zbuf[i];
        if (v < inf) {
            r.min = v < r.min ? v : r.min;
            r.max = v > r.max ? v : r.max;
            ++r.count;
        }
    }
    return r;
}

Moments masked_moments_avx2(const double* values, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    __m256d acc2 = _mm256_setzero_pd();
    const __m256d zero = _mm256_setzero_pd();
    std::size_t count = 0;

    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(values + i);
        __m256d fg = _mm256_cmp_pd(v, zero, _CMP_GE_OQ);
        count += std::size_t(__builtin_popcount(unsigned(_mm256_movemask_pd(fg))));
        __m256d m = _mm256_and_pd(v, fg);
        acc = _mm256_add_pd(acc, m);
        acc2 = _mm256_add_pd(acc2, _mm256_mul_pd(m, m));
    }
    double a[4], a2[4];
    _mm256_storeu_pd(a, acc);
    _mm256_storeu_pd(a2, acc2);
    for (; i < n; ++i) {
        double v = values[i];
        double m = v >= 0.0 ? v : 0.0;
        a[i & 3] += m;
        a2[i & 3] += m * m;
        count += v >= 0.0 ? 1 : 0;
    }
    Moments r;
    r.sum = (a[0] + a[1]) + (a[2] + a[3]);
    r.sum_sq = (a2[0] + a2[1]) + (a2[2] + a2[3]);
    r.count = count;
    return r;
}

PixelCounts count_segment_pixels_avx2(const std::int32_t* segmap, std::size_t n,
                                      std::int32_t segment) {
    const __m256i seg = _mm256_set1_epi32(segment);
    const __m256i minus1 = _mm256_set1_epi32(-1);
    PixelCounts r{0, 0};

    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(segmap + i));
        unsigned eq = unsigned(_mm256_movemask_ps(_mm256_castsi256_ps(_mm256_cmpeq_epi32(v, seg))));
        unsigned fg = unsigned(_mm256_movemask_ps(_mm256_castsi256_ps(_mm256_cmpgt_epi32(v, minus1))));
        r.equal += std::size_t(__builtin_popcount(eq));
        r.foreground += std::size_t(__builtin_popcount(fg));
    }
    for (; i < n; ++i) {
        std::int32_t v = segmap[i];
        r.equal += v == segment ? 1 : 0;
        r.foreground += v >= 0 ? 1 : 0;
    }
    return r;
}

const KernelTable avx2_impl{
    "avx2",
    &project_points_avx2,
    &srgb_to_lab_keys_avx2,
    &zbuf_minmax_avx2,
    &masked_moments_avx2,
    &count_segment_pixels_avx2,
};

}  // namespace

const KernelTable* avx2_table() { return &avx2_impl; }

}  // namespace geomat::kernels

#else  // !__AVX2__

namespace geomat::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace geomat::kernels

#endif
