#pragma once

#include <cstdint>
#include <vector>

#include "geomat/geometry.hpp"

namespace geomat {

struct Color {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Color&) const = default;
};

struct Camera {
    Vec3 position;
    Vec3 target;
    Vec3 up{0, 1, 0};
    double fov_degrees = 60.0;

    // Throws InputError when position == target or up is (near-)parallel to
    // the view direction.
    void validate() const;
};

// Rendering parameters. The white background is load-bearing: the view
// scorer defines foreground as "not background white".
struct RenderConfig {
    int width = 512;
    int height = 512;
    int splat_radius = 2;
    Color background{255, 255, 255};
    std::vector<Color> segment_palette;  // empty = default_segment_palette()
    Color highlight_color{255, 0, 0};
    Color uniform_color{255, 165, 0};
    double fov_degrees = 60.0;            // applied to generated cameras
    double camera_distance_factor = 2.2;  // times the bounding radius

    void validate() const;
};

const std::vector<Color>& default_segment_palette();

enum class RenderMode { uniform, per_segment, highlight };

// One rendered view. raster/depth/segmap agree on what is background:
// white pixel <=> depth -1 <=> segmap -1. Foreground depth is normalized per
// view to [0,1] with 1 at the nearest pixel.
struct RenderedView {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> raster;  // RGB8, row-major
    std::vector<double> depth;         // -1 background
    std::vector<std::int32_t> segmap;  // -1 background
    Camera camera;

    std::size_t pixel_count() const { return std::size_t(width) * std::size_t(height); }
};

// The eight cameras on the corners of the frame-aligned cube, ordered by the
// axis sign pattern +++, ++-, +-+, +--, -++, -+-, --+, ---. Each camera sits
// at centroid + distance * (s1*a1 + s2*a2 + s3*a3)/sqrt(3), looks at the
// centroid, and uses the frame axis least aligned with the view direction as
// up (ties by lowest axis index).
std::vector<Camera> cube_corner_cameras(const OrthonormalFrame& frame, double distance);

// Camera layouts for the semantic stage: 4 = alternating corners (a
// tetrahedron), 8 = all corners, 12 = corners plus the four face centers
// along +-a1 and +-a2.
std::vector<Camera> semantic_view_cameras(const OrthonormalFrame& frame, double distance,
                                          int view_count);

// `count` cameras at centroid + distance * u with u drawn uniformly from the
// unit sphere by a seeded generator. Same seed, same cameras.
std::vector<Camera> sample_sphere_cameras(int count, std::uint64_t seed,
                                          const OrthonormalFrame& frame, double distance);

// Software point-splat rasterizer: perspective projection, filled discs of
// splat_radius pixels, nearest-point depth test. `highlight_segment` is used
// only in highlight mode. An all-background result is legal.
RenderedView render_view(const SegmentedPointCloud& cloud, const Camera& camera,
                         const RenderConfig& config, RenderMode mode,
                         int highlight_segment = -1);

// PNG encodings of a view. Depth maps to 8-bit gray: background 0,
// foreground 1 + round(254 * d) so background stays distinguishable.
std::vector<std::uint8_t> raster_png(const RenderedView& view);
std::vector<std::uint8_t> depth_png(const RenderedView& view);

// Debug PGM of the segment map, 255 = background.
std::vector<std::uint8_t> segmap_pgm(const RenderedView& view);

}  // namespace geomat
