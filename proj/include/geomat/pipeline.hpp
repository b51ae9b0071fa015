#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "geomat/llm.hpp"
#include "geomat/render.hpp"
#include "geomat/viewselect.hpp"

namespace geomat {

struct AblationFlags {
    bool skip_semantics = false;  // run stage 2 with object name "unknown"
    bool depth_only = false;      // stage 1 sees only depth maps
    bool raster_only = false;     // stage 1 sees only point-cloud projections
};

struct PipelineConfig {
    int semantic_views = 8;       // 4, 8, or 12
    int semantic_threshold = 70;  // confidence gate, 0..100
    ViewSelectConfig view_select;
    MaterialPalette palette = MaterialPalette::defaults();
    int max_segments = 10;
    AblationFlags ablation;
    std::uint64_t seed = 0;  // drives stage-2 camera sampling
    RenderConfig render;
    QueryOptions query;
    LoadOptions load;

    void validate() const;
};

struct StageOneResult {
    SemanticOutcome semantic;
    CostRecord cost{CostStage::semantic};
    std::vector<std::vector<std::uint8_t>> depth_pngs;
    std::vector<std::vector<std::uint8_t>> raster_pngs;
    bool backend_failed = false;
    std::string note;
};

// Renders the semantic views, sends one query with all images, applies the
// confidence gate. Expects a normalized cloud. Transport exhaustion is
// reported through backend_failed rather than thrown so the cost of failed
// attempts is kept.
StageOneResult stage1_semantics(const SegmentedPointCloud& cloud, Backend& backend,
                                const PipelineConfig& config);

struct StageTwoResult {
    std::vector<MaterialAssignment> assignments;
    std::vector<std::vector<std::uint8_t>> best_view_pngs;  // empty for invisible segments
    CostRecord cost{CostStage::material};
    std::vector<std::string> notes;
};

// One best-view render and one query per segment, in segment order. Failures
// are per segment: the affected segment gets "unknown" and a note, the rest
// proceed.
StageTwoResult stage2_materials(const SegmentedPointCloud& cloud, const std::string& label,
                                Backend& backend, const PipelineConfig& config);

struct ModelResult {
    std::string model_id;
    std::string source_path;
    std::optional<std::string> skip_reason;  // set when the model never ran
    bool failed = false;                     // load or stage-1 backend failure
    SemanticOutcome semantic;
    std::vector<MaterialAssignment> assignments;
    std::vector<CostRecord> costs;
    std::vector<std::string> failure_notes;
    // Artifact paths recorded by the sink; empty strings when not saved.
    std::vector<std::string> stage1_depth_paths;
    std::vector<std::string> stage1_raster_paths;
    std::vector<std::string> segment_image_paths;  // parallel to assignments

    bool processed() const { return !skip_reason.has_value(); }
    bool confident() const { return semantic.status == SemanticStatus::confident; }
};

enum class ArtifactKind { stage1_depth, stage1_raster, best_view };

// Receives every PNG the pipeline produces for a model and returns the path
// to record in the result (or "" to record nothing). An empty sink discards.
using ArtifactSink = std::function<std::string(
    const std::string& model_id, ArtifactKind kind, int index,
    const std::vector<std::uint8_t>& png)>;

ModelResult run_model(const SegmentedPointCloud& cloud, Backend& backend,
                      const PipelineConfig& config, const ArtifactSink& sink = {});

struct CostLedger {
    CostRecord semantic{CostStage::semantic};
    CostRecord material{CostStage::material};
    CostRecord judge{CostStage::judge};

    void add(const CostRecord& record);
    CostRecord total() const;
};

struct BatchResult {
    std::vector<ModelResult> models;  // ordered by model_id
    CostLedger ledger;
};

// Loads, filters (clouds with more than max_segments segments are skipped
// with a reason), and processes up to `parallelism` models concurrently.
// Output order and content do not depend on the parallelism level.
BatchResult run_batch(const std::vector<std::filesystem::path>& dataset,
                      Backend& backend, const PipelineConfig& config, int parallelism,
                      const ArtifactSink& sink = {});

}  // namespace geomat
