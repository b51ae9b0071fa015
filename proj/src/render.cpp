#include "geomat/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "geomat/image_io.hpp"
#include "geomat/kernels.hpp"

namespace geomat {
namespace {

constexpr float kNearClip = 1e-6f;
constexpr double kPi = 3.14159265358979323846;

const std::vector<Color>& palette_of(const RenderConfig& config) {
    return config.segment_palette.empty() ? default_segment_palette()
                                          : config.segment_palette;
}

Vec3 least_aligned_axis(const OrthonormalFrame& frame, const Vec3& view_dir) {
    int best = 0;
    double best_dot = std::abs(frame.axes[0].dot(view_dir));
    for (int j = 1; j < 3; ++j) {
        double d = std::abs(frame.axes[std::size_t(j)].dot(view_dir));
        if (d < best_dot) {
            best = j;
            best_dot = d;
        }
    }
    return frame.axes[std::size_t(best)];
}

Camera camera_at(const OrthonormalFrame& frame, const Vec3& direction, double distance) {
    Camera cam;
    cam.position = frame.centroid + distance * direction;
    cam.target = frame.centroid;
    cam.up = least_aligned_axis(frame, (cam.target - cam.position).normalized());
    return cam;
}

}  // namespace

void Camera::validate() const {
    Vec3 dir = target - position;
    if (dir.norm() == 0.0) {
        throw InputError("camera position equals target");
    }
    if (up.norm() == 0.0) {
        throw InputError("camera up vector is zero");
    }
    if (dir.normalized().cross(up.normalized()).norm() <= 1e-6) {
        throw InputError("camera up vector is parallel to the view direction");
    }
    if (!(fov_degrees > 0.0) || !(fov_degrees < 180.0)) {
        throw InputError("camera fov must lie in (0, 180) degrees");
    }
}

void RenderConfig::validate() const {
    if (width < 64 || height < 64) {
        throw InputError("render size must be at least 64x64");
    }
    if (splat_radius < 1) {
        throw InputError("splat radius must be at least 1 pixel");
    }
    if (!(background == Color{255, 255, 255})) {
        throw InputError("background must be white; the view scorer counts non-white pixels");
    }
    const std::vector<Color>& palette = palette_of(*this);
    if (palette.empty()) {
        throw InputError("segment palette is empty");
    }
    for (std::size_t i = 0; i < palette.size(); ++i) {
        if (palette[i] == background || palette[i] == highlight_color) {
            throw InputError("palette colors must differ from the background and highlight");
        }
        for (std::size_t j = i + 1; j < palette.size(); ++j) {
            if (palette[i] == palette[j]) {
                throw InputError("palette colors must be pairwise distinct");
            }
        }
    }
    if (uniform_color == background) {
        throw InputError("uniform color must differ from the background");
    }
    if (!(fov_degrees > 0.0) || !(fov_degrees < 180.0)) {
        throw InputError("fov must lie in (0, 180) degrees");
    }
    if (!(camera_distance_factor > 0.0)) {
        throw InputError("camera distance factor must be positive");
    }
}

const std::vector<Color>& default_segment_palette() {
    static const std::vector<Color> palette = {
        {0, 114, 189},  {217, 83, 25},  {237, 177, 32},  {126, 47, 142},
        {119, 172, 48}, {77, 190, 238}, {162, 20, 47},   {0, 128, 0},
        {0, 0, 255},    {255, 0, 255},  {0, 255, 255},   {128, 64, 0},
        {64, 128, 128}, {255, 128, 192}, {128, 128, 0},  {0, 64, 128},
    };
    return palette;
}

std::vector<Camera> cube_corner_cameras(const OrthonormalFrame& frame, double distance) {
    if (!(distance > 0.0)) {
        throw InputError("camera distance must be positive");
    }
    const double inv_sqrt3 = 1.0 / std::sqrt(3.0);
    std::vector<Camera> cams;
    cams.reserve(8);
    for (int bits = 0; bits < 8; ++bits) {
        double s1 = (bits & 4) ? -1.0 : 1.0;
        double s2 = (bits & 2) ? -1.0 : 1.0;
        double s3 = (bits & 1) ? -1.0 : 1.0;
        Vec3 dir = (s1 * frame.axes[0] + s2 * frame.axes[1] + s3 * frame.axes[2]) * inv_sqrt3;
        cams.push_back(camera_at(frame, dir, distance));
    }
    return cams;
}

std::vector<Camera> semantic_view_cameras(const OrthonormalFrame& frame, double distance,
                                          int view_count) {
    std::vector<Camera> corners = cube_corner_cameras(frame, distance);
    switch (view_count) {
        case 8:
            return corners;
        case 4:
            // Alternating corners: +++, +--, -+-, --+.
            return {corners[0], corners[3], corners[5], corners[6]};
        case 12: {
            std::vector<Camera> cams = corners;
            for (const Vec3& dir : {frame.axes[0], -frame.axes[0], frame.axes[1], -frame.axes[1]}) {
                cams.push_back(camera_at(frame, dir, distance));
            }
            return cams;
        }
        default:
            throw InputError("semantic view count must be 4, 8, or 12");
    }
}

std::vector<Camera> sample_sphere_cameras(int count, std::uint64_t seed,
                                          const OrthonormalFrame& frame, double distance) {
    if (count < 1) {
        throw InputError("camera count must be at least 1");
    }
    std::mt19937_64 rng(seed);
    auto unit = [&rng]() {
        // 53-bit mantissa draw; portable across standard libraries.
        return double(rng() >> 11) * 0x1.0p-53;
    };
    std::vector<Camera> cams;
    cams.reserve(std::size_t(count));
    for (int i = 0; i < count; ++i) {
        double z = 1.0 - 2.0 * unit();
        double phi = 2.0 * kPi * unit();
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        Vec3 dir{r * std::cos(phi), r * std::sin(phi), z};
        cams.push_back(camera_at(frame, dir, distance));
    }
    return cams;
}

RenderedView render_view(const SegmentedPointCloud& cloud, const Camera& camera,
                         const RenderConfig& config, RenderMode mode,
                         int highlight_segment) {
    config.validate();
    camera.validate();
    const std::vector<Color>& palette = palette_of(config);
    if (mode == RenderMode::highlight &&
        (highlight_segment < 0 || highlight_segment >= cloud.segment_count)) {
        throw InputError("highlight segment index out of range");
    }
    if (mode != RenderMode::uniform &&
        std::size_t(cloud.segment_count) > palette.size()) {
        throw InputError("segment palette has fewer colors than the cloud has segments");
    }

    const int w = config.width;
    const int h = config.height;
    const std::size_t npx = std::size_t(w) * std::size_t(h);
    const std::size_t n = cloud.size();

    // Camera basis and premultiplied projection rows.
    Vec3 forward = (camera.target - camera.position).normalized();
    Vec3 right = forward.cross(camera.up.normalized()).normalized();
    Vec3 upv = right.cross(forward);

    double tan_half = std::tan(camera.fov_degrees * 0.5 * kPi / 180.0);
    double aspect = double(w) / double(h);
    Vec3 row_x = right * (0.5 * double(w) / (tan_half * aspect));
    Vec3 row_y = upv * (0.5 * double(h) / tan_half);

    kernels::ProjectParams pp;
    auto fill_row = [&](float out[4], const Vec3& v) {
        out[0] = float(v.x);
        out[1] = float(v.y);
        out[2] = float(v.z);
        out[3] = float(-v.dot(camera.position));
    };
    fill_row(pp.row_x, row_x);
    fill_row(pp.row_y, row_y);
    fill_row(pp.row_z, forward);
    pp.center_x = float(0.5 * double(w));
    pp.center_y = float(0.5 * double(h));

    std::vector<float> xs(n), ys(n), zs(n), sx(n), sy(n), zc(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = float(cloud.points[i].x);
        ys[i] = float(cloud.points[i].y);
        zs[i] = float(cloud.points[i].z);
    }
    const kernels::KernelTable& k = kernels::active();
    if (n > 0) {
        k.project_points(xs.data(), ys.data(), zs.data(), n, pp, sx.data(), sy.data(),
                         zc.data());
    }

    std::vector<float> zbuf(npx, std::numeric_limits<float>::infinity());
    std::vector<std::int32_t> segbuf(npx, -1);
    const double r = double(config.splat_radius);
    const double r2 = r * r;

    for (std::size_t i = 0; i < n; ++i) {
        float z = zc[i];
        if (!(z > kNearClip)) {
            continue;  // behind or on the camera plane
        }
        double cx = double(sx[i]);
        double cy = double(sy[i]);
        if (!std::isfinite(cx) || !std::isfinite(cy)) {
            continue;
        }
        double x0d = std::ceil(cx - r - 0.5);
        double x1d = std::floor(cx + r - 0.5);
        double y0d = std::ceil(cy - r - 0.5);
        double y1d = std::floor(cy + r - 0.5);
        if (x1d < 0.0 || y1d < 0.0 || x0d > double(w - 1) || y0d > double(h - 1)) {
            continue;
        }
        int x0 = int(std::max(0.0, x0d));
        int x1 = int(std::min(double(w - 1), x1d));
        int y0 = int(std::max(0.0, y0d));
        int y1 = int(std::min(double(h - 1), y1d));
        std::int32_t seg = cloud.segment_of[i];
        for (int py = y0; py <= y1; ++py) {
            double dy = double(py) + 0.5 - cy;
            for (int px = x0; px <= x1; ++px) {
                double dx = double(px) + 0.5 - cx;
                if (dx * dx + dy * dy > r2) {
                    continue;
                }
                std::size_t idx = std::size_t(py) * std::size_t(w) + std::size_t(px);
                if (z < zbuf[idx]) {
                    zbuf[idx] = z;
                    segbuf[idx] = seg;
                }
            }
        }
    }

    kernels::MinMaxCount mm = k.zbuf_minmax(zbuf.data(), npx);

    RenderedView view;
    view.width = w;
    view.height = h;
    view.camera = camera;
    view.raster.assign(npx * 3, 0);
    view.depth.assign(npx, -1.0);
    view.segmap = std::move(segbuf);

    const double zmin = double(mm.min);
    const double zmax = double(mm.max);
    const bool flat = !(zmax > zmin);
    for (std::size_t idx = 0; idx < npx; ++idx) {
        std::int32_t seg = view.segmap[idx];
        std::uint8_t* px = view.raster.data() + idx * 3;
        if (seg < 0) {
            px[0] = config.background.r;
            px[1] = config.background.g;
            px[2] = config.background.b;
            continue;
        }
        Color c;
        switch (mode) {
            case RenderMode::uniform:
                c = config.uniform_color;
                break;
            case RenderMode::per_segment:
                c = palette[std::size_t(seg)];
                break;
            case RenderMode::highlight:
                c = seg == highlight_segment ? config.highlight_color
                                             : palette[std::size_t(seg)];
                break;
        }
        px[0] = c.r;
        px[1] = c.g;
        px[2] = c.b;
        view.depth[idx] = flat ? 1.0 : (zmax - double(zbuf[idx])) / (zmax - zmin);
    }
    return view;
}

std::vector<std::uint8_t> raster_png(const RenderedView& view) {
    return io::encode_png_rgb8(view.raster.data(), view.width, view.height);
}

std::vector<std::uint8_t> depth_png(const RenderedView& view) {
    std::vector<std::uint8_t> gray(view.pixel_count(), 0);
    for (std::size_t i = 0; i < gray.size(); ++i) {
        double d = view.depth[i];
        if (d >= 0.0) {
            gray[i] = std::uint8_t(1 + std::llround(254.0 * d));
        }
    }
    return io::encode_png_gray8(gray.data(), view.width, view.height);
}

std::vector<std::uint8_t> segmap_pgm(const RenderedView& view) {
    std::vector<std::uint8_t> gray(view.pixel_count(), 255);
    for (std::size_t i = 0; i < gray.size(); ++i) {
        std::int32_t seg = view.segmap[i];
        if (seg >= 0) {
            if (seg > 254) {
                throw InputError("segment map PGM supports at most 255 segments");
            }
            gray[i] = std::uint8_t(seg);
        }
    }
    return io::encode_pgm(gray.data(), view.width, view.height);
}

}  // namespace geomat
