#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "geomat/errors.hpp"

namespace geomat {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const { return *this / norm(); }

    bool operator==(const Vec3&) const = default;
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// A point cloud with a disjoint segmentation: every point carries exactly one
// segment index, every index in [0, segment_count) is populated, and all
// coordinates are finite.
struct SegmentedPointCloud {
    std::vector<Vec3> points;
    std::vector<std::int32_t> segment_of;
    std::int32_t segment_count = 0;
    std::string model_id;

    std::size_t size() const { return points.size(); }
};

struct OrthonormalFrame {
    std::array<Vec3, 3> axes;  // right-handed, descending variance
    Vec3 centroid;
    double bounding_radius = 0.0;
    bool degenerate = false;  // rank-deficient cloud, identity fallback used

    static OrthonormalFrame identity() {
        return {{Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}}, Vec3{}, 0.0, false};
    }
};

enum class CloudFormat { xyzs_text, ply_ascii };

struct LoadOptions {
    // Map every point of a file without segment labels to segment 0 instead
    // of rejecting the file.
    bool allow_unsegmented = false;
};

// XYZS: one `x y z segment_id` record per line, '#' comments.
// PLY (ascii): standard x/y/z vertex properties plus an integer property
// named "segment". Segment ids are compacted to 0..k-1 in first-appearance
// order. Throws InputError on unreadable or malformed input.
SegmentedPointCloud load_point_cloud(const std::filesystem::path& path,
                                     CloudFormat format,
                                     const LoadOptions& options = {});

// Format from the file extension (.ply vs anything else = xyzs).
SegmentedPointCloud load_point_cloud(const std::filesystem::path& path,
                                     const LoadOptions& options = {});

// Centroid to the origin, bounding radius to 1. Points come back in a
// canonical sort order so every downstream computation is invariant to the
// input point order, bit for bit. Throws InputError when all points
// coincide.
SegmentedPointCloud normalize(const SegmentedPointCloud& cloud);

// PCA frame of the cloud: covariance eigenvectors ordered by descending
// eigenvalue, each sign-fixed (largest-magnitude component positive), third
// axis forced to axes[0] x axes[1]. Rank-deficient clouds get the identity
// frame with the degenerate flag set. Deterministic under any permutation of
// the input points.
OrthonormalFrame principal_axes(const SegmentedPointCloud& cloud);

}  // namespace geomat
