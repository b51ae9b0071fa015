#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "geomat/render.hpp"

namespace geomat {

// Pixel counts per unique rounded-Lab color over non-background pixels.
struct ColorHistogram {
    std::map<std::int32_t, std::size_t> bins;  // packed Lab key -> count
    std::size_t total = 0;

    std::size_t unique() const { return bins.size(); }
};

ColorHistogram color_histogram(const RenderedView& view);

// Shannon entropy (nats) of the unique-color distribution of the raster in
// Lab space. 0 for an empty foreground.
double color_entropy(const RenderedView& view);

// Population standard deviation of the normalized foreground depth values;
// 0 when fewer than two foreground pixels exist.
double depth_spread(const RenderedView& view);

// Fraction of foreground pixels belonging to `segment`; 0 on an empty
// foreground.
double visibility(const RenderedView& view, int segment);

// Foreground pixel count per segment; their sum equals the total foreground.
std::vector<std::size_t> segment_pixel_counts(const RenderedView& view,
                                              int segment_count);

struct ScoreWeights {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 100.0;

    void validate() const;  // nonnegative, at least one positive
};

double combined_score(const ScoreWeights& w, double entropy, double depth_spread,
                      double visibility);

struct ViewScore {
    double entropy = 0.0;
    double depth_spread = 0.0;
    double visibility = 0.0;
    std::size_t segment_pixels = 0;
    std::size_t foreground_pixels = 0;
    double combined = 0.0;
};

ViewScore view_score(const RenderedView& view, int segment, const ScoreWeights& weights);

struct ViewSelectConfig {
    int camera_count = 10;
    double visibility_floor = 1e-5;
    ScoreWeights weights;
    std::uint64_t seed = 0;

    void validate() const;
};

struct CandidateScore {
    int camera_index = 0;
    ViewScore score;
    bool discarded = false;
};

struct BestView {
    RenderedView view;
    ViewScore score;
    int camera_index = -1;
};

// Every candidate view fell below the visibility floor.
class SegmentInvisibleError : public std::runtime_error {
public:
    explicit SegmentInvisibleError(const std::string& what) : std::runtime_error(what) {}
};

// Renders `config.camera_count` sphere-sampled candidate views of the cloud
// with `segment` highlighted, discards candidates below the visibility
// floor, and returns the view with the highest combined score (ties: lowest
// camera index). Expects a normalized cloud. Fills `candidates` with the
// per-candidate score table when given.
BestView best_view(const SegmentedPointCloud& cloud, int segment,
                   const OrthonormalFrame& frame, const ViewSelectConfig& config,
                   const RenderConfig& render_config,
                   std::vector<CandidateScore>* candidates = nullptr);

void write_scores_csv(const std::filesystem::path& path,
                      const std::vector<CandidateScore>& candidates);

}  // namespace geomat
