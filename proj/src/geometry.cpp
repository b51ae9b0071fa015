#include "geomat/geometry.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace geomat {
namespace {

bool parse_double(const std::string& tok, double& out) {
    const char* begin = tok.data();
    const char* end = begin + tok.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc{} || ptr != end) {
        // from_chars does not accept "nan"/"inf" spellings everywhere; fall
        // back to strtod so those inputs reach the finiteness check.
        char* send = nullptr;
        out = std::strtod(tok.c_str(), &send);
        return send == tok.c_str() + tok.size() && send != tok.c_str();
    }
    return true;
}

bool parse_segment_id(const std::string& tok, long long& out) {
    const char* begin = tok.data();
    const char* end = begin + tok.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc{} && ptr == end && out >= 0;
}

struct RawCloud {
    std::vector<Vec3> points;
    std::vector<long long> raw_segments;
};

[[noreturn]] void malformed(const std::filesystem::path& path, std::size_t line,
                            const std::string& why) {
    throw InputError(path.string() + ":" + std::to_string(line) +
                     ": malformed record: " + why);
}

RawCloud read_xyzs(const std::filesystem::path& path, const LoadOptions& options) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open point cloud file: " + path.string());
    }
    RawCloud raw;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        std::istringstream ls(line);
        std::vector<std::string> tokens;
        std::string tok;
        while (ls >> tok) {
            tokens.push_back(tok);
        }
        if (tokens.empty()) {
            continue;
        }
        if (tokens.size() < 3 || tokens.size() > 4) {
            malformed(path, lineno, "expected `x y z segment_id`");
        }
        Vec3 p;
        if (!parse_double(tokens[0], p.x) || !parse_double(tokens[1], p.y) ||
            !parse_double(tokens[2], p.z)) {
            malformed(path, lineno, "unparsable coordinate");
        }
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
            malformed(path, lineno, "non-finite coordinate");
        }
        long long seg = 0;
        if (tokens.size() == 4) {
            if (!parse_segment_id(tokens[3], seg)) {
                malformed(path, lineno, "segment id must be a nonnegative integer");
            }
        } else if (!options.allow_unsegmented) {
            malformed(path, lineno, "missing segment field");
        }
        raw.points.push_back(p);
        raw.raw_segments.push_back(seg);
    }
    return raw;
}

bool is_float_type(const std::string& t) {
    return t == "float" || t == "float32" || t == "double" || t == "float64";
}

bool is_int_type(const std::string& t) {
    return t == "char" || t == "uchar" || t == "short" || t == "ushort" ||
           t == "int" || t == "uint" || t == "int8" || t == "uint8" ||
           t == "int16" || t == "uint16" || t == "int32" || t == "uint32";
}

RawCloud read_ply_ascii(const std::filesystem::path& path, const LoadOptions& options) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open point cloud file: " + path.string());
    }
    auto next_line = [&](std::string& out) {
        if (!std::getline(in, out)) {
            return false;
        }
        while (!out.empty() && (out.back() == '\r' || out.back() == '\n')) {
            out.pop_back();
        }
        return true;
    };

    std::string line;
    if (!next_line(line) || line != "ply") {
        throw InputError(path.string() + ": not a PLY file");
    }

    struct Element {
        std::string name;
        std::size_t count = 0;
        std::vector<std::string> property_names;
        bool has_list = false;
    };
    std::vector<Element> elements;
    bool format_seen = false;
    std::size_t lineno = 1;
    while (true) {
        if (!next_line(line)) {
            throw InputError(path.string() + ": unterminated PLY header");
        }
        ++lineno;
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw == "comment" || kw == "obj_info" || kw.empty()) {
            continue;
        }
        if (kw == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "ascii") {
                throw InputError(path.string() + ": only ascii PLY is supported, got " + fmt);
            }
            format_seen = true;
        } else if (kw == "element") {
            Element e;
            ls >> e.name >> e.count;
            elements.push_back(e);
        } else if (kw == "property") {
            if (elements.empty()) {
                malformed(path, lineno, "property before any element");
            }
            std::string type, name;
            ls >> type;
            if (type == "list") {
                elements.back().has_list = true;
                continue;
            }
            ls >> name;
            if (!is_float_type(type) && !is_int_type(type)) {
                malformed(path, lineno, "unsupported property type " + type);
            }
            elements.back().property_names.push_back(name);
        } else if (kw == "end_header") {
            break;
        } else {
            malformed(path, lineno, "unknown header keyword " + kw);
        }
    }
    if (!format_seen) {
        throw InputError(path.string() + ": PLY header missing format line");
    }

    RawCloud raw;
    for (const Element& e : elements) {
        if (e.name != "vertex") {
            for (std::size_t i = 0; i < e.count; ++i) {
                if (!next_line(line)) {
                    throw InputError(path.string() + ": truncated element " + e.name);
                }
                ++lineno;
            }
            continue;
        }
        if (e.has_list) {
            throw InputError(path.string() + ": list properties on vertex are unsupported");
        }
        auto index_of = [&](const std::string& n) -> int {
            for (std::size_t i = 0; i < e.property_names.size(); ++i) {
                if (e.property_names[i] == n) {
                    return int(i);
                }
            }
            return -1;
        };
        int ix = index_of("x"), iy = index_of("y"), iz = index_of("z");
        int iseg = index_of("segment");
        if (ix < 0 || iy < 0 || iz < 0) {
            throw InputError(path.string() + ": vertex element lacks x/y/z properties");
        }
        if (iseg < 0 && !options.allow_unsegmented) {
            throw InputError(path.string() +
                             ": vertex element lacks a `segment` property "
                             "(pass allow_unsegmented to map all points to segment 0)");
        }
        for (std::size_t i = 0; i < e.count; ++i) {
            if (!next_line(line)) {
                throw InputError(path.string() + ": truncated vertex element");
            }
            ++lineno;
            std::istringstream ls(line);
            std::vector<std::string> tokens;
            std::string tok;
            while (ls >> tok) {
                tokens.push_back(tok);
            }
            if (tokens.size() != e.property_names.size()) {
                malformed(path, lineno, "vertex record has wrong field count");
            }
            Vec3 p;
            if (!parse_double(tokens[std::size_t(ix)], p.x) ||
                !parse_double(tokens[std::size_t(iy)], p.y) ||
                !parse_double(tokens[std::size_t(iz)], p.z)) {
                malformed(path, lineno, "unparsable coordinate");
            }
            if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
                malformed(path, lineno, "non-finite coordinate");
            }
            long long seg = 0;
            if (iseg >= 0 && !parse_segment_id(tokens[std::size_t(iseg)], seg)) {
                malformed(path, lineno, "segment id must be a nonnegative integer");
            }
            raw.points.push_back(p);
            raw.raw_segments.push_back(seg);
        }
    }
    return raw;
}

SegmentedPointCloud compact(RawCloud&& raw, const std::filesystem::path& path) {
    if (raw.points.empty()) {
        throw InputError(path.string() + ": point cloud has zero points");
    }
    SegmentedPointCloud cloud;
    cloud.points = std::move(raw.points);
    cloud.segment_of.reserve(cloud.points.size());
    std::unordered_map<long long, std::int32_t> remap;
    for (long long rawseg : raw.raw_segments) {
        auto [it, inserted] = remap.emplace(rawseg, std::int32_t(remap.size()));
        cloud.segment_of.push_back(it->second);
        (void)inserted;
    }
    cloud.segment_count = std::int32_t(remap.size());
    cloud.model_id = path.stem().string();
    return cloud;
}

std::vector<std::size_t> canonical_order(const SegmentedPointCloud& cloud) {
    std::vector<std::size_t> order(cloud.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const Vec3& pa = cloud.points[a];
        const Vec3& pb = cloud.points[b];
        if (pa.x != pb.x) return pa.x < pb.x;
        if (pa.y != pb.y) return pa.y < pb.y;
        if (pa.z != pb.z) return pa.z < pb.z;
        return cloud.segment_of[a] < cloud.segment_of[b];
    });
    return order;
}

// Cyclic Jacobi diagonalization of a symmetric 3x3 matrix. Eigenvectors come
// back as columns of v. Deterministic: fixed rotation order, fixed exit rule.
void jacobi3(double a[3][3], double w[3], double v[3][3]) {
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            v[i][j] = i == j ? 1.0 : 0.0;
        }
    }
    constexpr int kPairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if (off == 0.0) {
            break;
        }
        for (const auto& pq : kPairs) {
            int p = pq[0], q = pq[1];
            if (a[p][q] == 0.0) {
                continue;
            }
            double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            double t = (theta >= 0.0 ? 1.0 : -1.0) /
                       (std::abs(theta) + std::sqrt(theta * theta + 1.0));
            double c = 1.0 / std::sqrt(t * t + 1.0);
            double s = t * c;

            double app = a[p][p], aqq = a[q][q], apq = a[p][q];
            a[p][p] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
            a[q][q] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
            a[p][q] = 0.0;
            a[q][p] = 0.0;
            int r = 3 - p - q;
            double arp = a[r][p], arq = a[r][q];
            a[r][p] = c * arp - s * arq;
            a[p][r] = a[r][p];
            a[r][q] = s * arp + c * arq;
            a[q][r] = a[r][q];
            for (int i = 0; i < 3; ++i) {
                double vip = v[i][p], viq = v[i][q];
                v[i][p] = c * vip - s * viq;
                v[i][q] = s * vip + c * viq;
            }
        }
    }
    w[0] = a[0][0];
    w[1] = a[1][1];
    w[2] = a[2][2];
}

Vec3 sign_fixed(Vec3 v) {
    int arg = 0;
    double best = std::abs(v.x);
    if (std::abs(v.y) > best) {
        arg = 1;
        best = std::abs(v.y);
    }
    if (std::abs(v.z) > best) {
        arg = 2;
    }
    double comp = arg == 0 ? v.x : (arg == 1 ? v.y : v.z);
    return comp < 0.0 ? -v : v;
}

bool lex_greater(const Vec3& a, const Vec3& b) {
    if (a.x != b.x) return a.x > b.x;
    if (a.y != b.y) return a.y > b.y;
    return a.z > b.z;
}

}  // namespace

SegmentedPointCloud load_point_cloud(const std::filesystem::path& path,
                                     CloudFormat format, const LoadOptions& options) {
    RawCloud raw = format == CloudFormat::ply_ascii ? read_ply_ascii(path, options)
                                                    : read_xyzs(path, options);
    return compact(std::move(raw), path);
}

SegmentedPointCloud load_point_cloud(const std::filesystem::path& path,
                                     const LoadOptions& options) {
    CloudFormat fmt = path.extension() == ".ply" ? CloudFormat::ply_ascii
                                                 : CloudFormat::xyzs_text;
    return load_point_cloud(path, fmt, options);
}

SegmentedPointCloud normalize(const SegmentedPointCloud& cloud) {
    if (cloud.size() == 0) {
        throw InputError("cannot normalize an empty cloud");
    }
    std::vector<std::size_t> order = canonical_order(cloud);

    Vec3 sum{};
    for (std::size_t idx : order) {
        sum = sum + cloud.points[idx];
    }
    Vec3 centroid = sum / double(cloud.size());

    double radius = 0.0;
    for (std::size_t idx : order) {
        radius = std::max(radius, (cloud.points[idx] - centroid).norm());
    }
    if (radius <= 0.0) {
        throw InputError("degenerate cloud: all points coincide");
    }

    SegmentedPointCloud out;
    out.points.reserve(cloud.size());
    out.segment_of.reserve(cloud.size());
    for (std::size_t idx : order) {
        out.points.push_back((cloud.points[idx] - centroid) / radius);
        out.segment_of.push_back(cloud.segment_of[idx]);
    }
    out.segment_count = cloud.segment_count;
    out.model_id = cloud.model_id;
    return out;
}

OrthonormalFrame principal_axes(const SegmentedPointCloud& cloud) {
    if (cloud.size() == 0) {
        throw InputError("cannot compute principal axes of an empty cloud");
    }
    std::vector<std::size_t> order = canonical_order(cloud);

    Vec3 sum{};
    for (std::size_t idx : order) {
        sum = sum + cloud.points[idx];
    }
    Vec3 centroid = sum / double(cloud.size());

    double radius = 0.0;
    double cov[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    for (std::size_t idx : order) {
        Vec3 d = cloud.points[idx] - centroid;
        radius = std::max(radius, d.norm());
        cov[0][0] += d.x * d.x;
        cov[0][1] += d.x * d.y;
        cov[0][2] += d.x * d.z;
        cov[1][1] += d.y * d.y;
        cov[1][2] += d.y * d.z;
        cov[2][2] += d.z * d.z;
    }
    double n = double(cloud.size());
    cov[0][0] /= n;
    cov[0][1] /= n;
    cov[0][2] /= n;
    cov[1][1] /= n;
    cov[1][2] /= n;
    cov[2][2] /= n;
    cov[1][0] = cov[0][1];
    cov[2][0] = cov[0][2];
    cov[2][1] = cov[1][2];

    double w[3];
    double v[3][3];
    jacobi3(cov, w, v);

    struct Pair {
        double value;
        Vec3 axis;
    };
    std::array<Pair, 3> pairs;
    for (int j = 0; j < 3; ++j) {
        pairs[std::size_t(j)] = {w[j], sign_fixed(Vec3{v[0][j], v[1][j], v[2][j]})};
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.value != b.value) return a.value > b.value;
        return lex_greater(a.axis, b.axis);
    });

    OrthonormalFrame frame;
    frame.centroid = centroid;
    frame.bounding_radius = radius;

    double lambda_max = pairs[0].value;
    double lambda_min = pairs[2].value;
    if (lambda_max <= 0.0 || lambda_min < lambda_max * 1e-12) {
        frame.axes = OrthonormalFrame::identity().axes;
        frame.degenerate = true;
        return frame;
    }

    frame.axes[0] = pairs[0].axis.normalized();
    frame.axes[1] = pairs[1].axis.normalized();
    frame.axes[2] = frame.axes[0].cross(frame.axes[1]).normalized();
    return frame;
}

}  // namespace geomat
