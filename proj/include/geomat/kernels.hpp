#pragma once

#include <cstddef>
#include <cstdint>

// Data-parallel inner loops shared by the rasterizer and the view scorer.
// Every kernel exists as a scalar reference implementation and, on x86-64,
// an AVX2 variant. Both variants execute the same arithmetic per element in
// the same order, so their outputs are bit-identical; the equivalence tests
// assert exactly that. The active table is picked once at startup from the
// CPU, overridable with GEOMAT_KERNELS=scalar|avx2|auto.

namespace geomat::kernels {

// Screen-space projection of one point p:
//   zc = row_z . (p, 1)                       camera-space depth
//   sx = (row_x . (p, 1)) / zc + center_x     continuous pixel x
//   sy = center_y - (row_y . (p, 1)) / zc     continuous pixel y
// row_x / row_y are premultiplied by the pixel scale. Points with zc <= 0
// produce inf/nan screen coordinates; callers must cull on depth first.
struct ProjectParams {
    float row_x[4];
    float row_y[4];
    float row_z[4];
    float center_x;
    float center_y;
};

struct MinMaxCount {
    float min;
    float max;
    std::size_t count;
};

struct Moments {
    double sum;
    double sum_sq;
    std::size_t count;
};

struct PixelCounts {
    std::size_t equal;       // pixels matching the queried segment
    std::size_t foreground;  // pixels with any segment (value >= 0)
};

struct KernelTable {
    const char* name;

    void (*project_points)(const float* xs, const float* ys, const float* zs,
                           std::size_t n, const ProjectParams& params,
                           float* sx, float* sy, float* depth);

    // Packed rounded CIELAB key per pixel, or -1 where the pixel equals the
    // background color. Key layout: (L << 18) | ((a + 128) << 9) | (b + 128).
    void (*srgb_to_lab_keys)(const std::uint8_t* rgb, std::size_t pixel_count,
                             std::uint8_t bg_r, std::uint8_t bg_g,
                             std::uint8_t bg_b, std::int32_t* keys);

    // Min/max/count over z-buffer entries, ignoring the +inf background
    // sentinel. count == 0 leaves min/max at +inf/-inf.
    MinMaxCount (*zbuf_minmax)(const float* zbuf, std::size_t n);

    // Sum / sum of squares / count over values >= 0 (negative = background).
    Moments (*masked_moments)(const double* values, std::size_t n);

    PixelCounts (*count_segment_pixels)(const std::int32_t* segmap,
                                        std::size_t n, std::int32_t segment);
};

const KernelTable& scalar_table();

// nullptr when the build target or the running CPU lacks AVX2.
const KernelTable* avx2_table();

bool avx2_supported();

// Table selected at first use; honors GEOMAT_KERNELS.
const KernelTable& active();

// 256-entry sRGB byte -> linear float lookup shared by all Lab variants.
const float* srgb_linear_lut();

inline int lab_l_from_key(std::int32_t key) { return int(key >> 18); }
inline int lab_a_from_key(std::int32_t key) { return int((key >> 9) & 0x1ff) - 128; }
inline int lab_b_from_key(std::int32_t key) { return int(key & 0x1ff) - 128; }

}  // namespace geomat::kernels
