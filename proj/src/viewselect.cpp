#include "geomat/viewselect.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "geomat/kernels.hpp"

namespace geomat {

ColorHistogram color_histogram(const RenderedView& view) {
    const std::size_t npx = view.pixel_count();
    std::vector<std::int32_t> keys(npx);
    if (npx > 0) {
        kernels::active().srgb_to_lab_keys(view.raster.data(), npx, 255, 255, 255,
                                           keys.data());
    }
    ColorHistogram hist;
    for (std::int32_t key : keys) {
        if (key >= 0) {
            ++hist.bins[key];
            ++hist.total;
        }
    }
    return hist;
}

double color_entropy(const RenderedView& view) {
    ColorHistogram hist = color_histogram(view);
    if (hist.total == 0) {
        return 0.0;
    }
    const double n = double(hist.total);
    double h = 0.0;
    for (const auto& [key, count] : hist.bins) {
        double p = double(count) / n;
        h -= p * std::log(p);
    }
    return h;
}

double depth_spread(const RenderedView& view) {
    kernels::Moments m = kernels::active().masked_moments(view.depth.data(),
                                                          view.depth.size());
    if (m.count < 2) {
        return 0.0;
    }
    // A constant foreground has an exact spread of zero; the one-pass moment
    // formula would leave ~1e-8 of cancellation noise instead.
    double first = -1.0;
    bool constant = true;
    for (double d : view.depth) {
        if (d < 0.0) {
            continue;
        }
        if (first < 0.0) {
            first = d;
        } else if (d != first) {
            constant = false;
            break;
        }
    }
    if (constant) {
        return 0.0;
    }
    double mean = m.sum / double(m.count);
    double var = m.sum_sq / double(m.count) - mean * mean;
    return std::sqrt(std::max(0.0, var));
}

double visibility(const RenderedView& view, int segment) {
    kernels::PixelCounts c = kernels::active().count_segment_pixels(
        view.segmap.data(), view.segmap.size(), segment);
    if (c.foreground == 0) {
        return 0.0;
    }
    return double(c.equal) / double(c.foreground);
}

std::vector<std::size_t> segment_pixel_counts(const RenderedView& view,
                                              int segment_count) {
    std::vector<std::size_t> counts(std::size_t(segment_count), 0);
    for (std::int32_t seg : view.segmap) {
        if (seg >= 0 && seg < segment_count) {
            ++counts[std::size_t(seg)];
        }
    }
    return counts;
}

void ScoreWeights::validate() const {
    if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) {
        throw InputError("score weights must be nonnegative");
    }
    if (alpha == 0.0 && beta == 0.0 && gamma == 0.0) {
        throw InputError("at least one score weight must be positive");
    }
}

double combined_score(const ScoreWeights& w, double entropy, double depth_spread,
                      double visibility) {
    return w.alpha * entropy + w.beta * depth_spread + w.gamma * visibility;
}

ViewScore view_score(const RenderedView& view, int segment, const ScoreWeights& weights) {
    ViewScore s;
    s.entropy = color_entropy(view);
    s.depth_spread = depth_spread(view);
    kernels::PixelCounts c = kernels::active().count_segment_pixels(
        view.segmap.data(), view.segmap.size(), segment);
    s.segment_pixels = c.equal;
    s.foreground_pixels = c.foreground;
    s.visibility = c.foreground == 0 ? 0.0 : double(c.equal) / double(c.foreground);
    s.combined = combined_score(weights, s.entropy, s.depth_spread, s.visibility);
    return s;
}

void ViewSelectConfig::validate() const {
    if (camera_count < 1) {
        throw InputError("camera count must be at least 1");
    }
    if (!(visibility_floor >= 0.0) || !(visibility_floor < 1.0)) {
        throw InputError("visibility floor must lie in [0, 1)");
    }
    weights.validate();
}

BestView best_view(const SegmentedPointCloud& cloud, int segment,
                   const OrthonormalFrame& frame, const ViewSelectConfig& config,
                   const RenderConfig& render_config,
                   std::vector<CandidateScore>* candidates) {
    config.validate();
    if (segment < 0 || segment >= cloud.segment_count) {
        throw InputError("segment index out of range");
    }
    double distance = render_config.camera_distance_factor * frame.bounding_radius;
    std::vector<Camera> cams =
        sample_sphere_cameras(config.camera_count, config.seed, frame, distance);
    for (Camera& cam : cams) {
        cam.fov_degrees = render_config.fov_degrees;
    }

    BestView best;
    bool have_best = false;
    if (candidates != nullptr) {
        candidates->clear();
    }
    for (std::size_t i = 0; i < cams.size(); ++i) {
        RenderedView view =
            render_view(cloud, cams[i], render_config, RenderMode::highlight, segment);
        ViewScore score = view_score(view, segment, config.weights);
        bool discarded = score.visibility < config.visibility_floor;
        if (candidates != nullptr) {
            candidates->push_back({int(i), score, discarded});
        }
        if (discarded) {
            continue;
        }
        if (!have_best || score.combined > best.score.combined) {
            best.view = std::move(view);
            best.score = score;
            best.camera_index = int(i);
            have_best = true;
        }
    }
    if (!have_best) {
        throw SegmentInvisibleError("segment " + std::to_string(segment) +
                                    " is not visible from any of " +
                                    std::to_string(config.camera_count) +
                                    " candidate cameras");
    }
    return best;
}

void write_scores_csv(const std::filesystem::path& path,
                      const std::vector<CandidateScore>& candidates) {
    std::ofstream out(path);
    if (!out) {
        throw InputError("cannot open file for writing: " + path.string());
    }
    out << "camera_index,E,D,V,S,discarded\n";
    char buf[256];
    for (const CandidateScore& c : candidates) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%d\n", c.camera_index,
                      c.score.entropy, c.score.depth_spread, c.score.visibility,
                      c.score.combined, c.discarded ? 1 : 0);
        out << buf;
    }
}

}  // namespace geomat
