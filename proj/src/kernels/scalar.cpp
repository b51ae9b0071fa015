#include "geomat/kernels.hpp"

#include <limits>

#include "lab_math.hpp"

namespace geomat::kernels {
namespace {

void project_points_scalar(const float* xs, const float* ys, const float* zs,
                           std::size_t n, const ProjectParams& p,
                           float* sx, float* sy, float* depth) {
    for (std::size_t i = 0; i < n; ++i) {
        float px = xs[i], py = ys[i], pz = zs[i];
        float zc = p.row_z[0] * px;
        zc += p.row_z[1] * py;
        zc += p.row_z[2] * pz;
        zc += p.row_z[3];
        float xv = p.row_x[0] * px;
        xv += p.row_x[1] * py;
        xv += p.row_x[2] * pz;
        xv += p.row_x[3];
        float yv = p.row_y[0] * px;
        yv += p.row_y[1] * py;
        yv += p.row_y[2] * pz;
        yv += p.row_y[3];
        sx[i] = xv / zc + p.center_x;
        sy[i] = p.center_y - yv / zc;
        depth[i] = zc;
    }
}

void srgb_to_lab_keys_scalar(const std::uint8_t* rgb, std::size_t n,
                             std::uint8_t bg_r, std::uint8_t bg_g,
                             std::uint8_t bg_b, std::int32_t* keys) {
    const float* lut = srgb_linear_lut();
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* px = rgb + 3 * i;
        if (px[0] == bg_r && px[1] == bg_g && px[2] == bg_b) {
            keys[i] = -1;
            continue;
        }
        keys[i] = detail::lab_key_pixel(px[0], px[1], px[2], lut);
    }
}

MinMaxCount zbuf_minmax_scalar(const float* zbuf, std::size_t n) {
    MinMaxCount r{std::numeric_limits<float>::infinity(),
                  -std::numeric_limits<float>::infinity(), 0};
    const float inf = std::numeric_limits<float>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        float v = zbuf[i];
        if (v < inf) {
            r.min = v < r.min ? v : r.min;
            r.max = v > r.max ? v : r.max;
            ++r.count;
        }
    }
    return r;
}

// Four rotating accumulators; lane j sums elements with index == j (mod 4),
// background contributing exactly 0.0. The AVX2 variant keeps the same lane
// assignment, so the final (a0+a1)+(a2+a3) combine is bit-identical.
Moments masked_moments_scalar(const double* values, std::size_t n) {
    double acc[4] = {0, 0, 0, 0};
    double acc2[4] = {0, 0, 0, 0};
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double v = values[i];
        double m = v >= 0.0 ? v : 0.0;
        acc[i & 3] += m;
        acc2[i & 3] += m * m;
        count += v >= 0.0 ? 1 : 0;
    }
    Moments r;
    r.sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    r.sum_sq = (acc2[0] + acc2[1]) + (acc2[2] + acc2[3]);
    r.count = count;
    return r;
}

PixelCounts count_segment_pixels_scalar(const std::int32_t* segmap,
                                        std::size_t n, std::int32_t segment) {
    PixelCounts r{0, 0};
    for (std::size_t i = 0; i < n; ++i) {
        std::int32_t v = segmap[i];
        r.equal += v == segment ? 1 : 0;
        r.foreground += v >= 0 ? 1 : 0;
    }
    return r;
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{
        "scalar",
        &project_points_scalar,
        &srgb_to_lab_keys_scalar,
        &zbuf_minmax_scalar,
        &masked_moments_scalar,
        &count_segment_pixels_scalar,
    };
    return table;
}

}  // namespace geomat::kernels
