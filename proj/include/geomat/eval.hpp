#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "geomat/pipeline.hpp"

namespace geomat {

enum class JudgeTargetKind { semantic, material };

struct JudgeVerdict {
    JudgeTargetKind kind = JudgeTargetKind::semantic;
    std::string model_id;
    int segment = -1;  // material verdicts only
    bool correct = false;
    std::string raw_response;
    std::string note;  // set when the verdict was forced (parse/backend failure)
};

// Binary judge over the stage-1 images and predicted label. Parse or backend
// failures yield a conservative "incorrect" with a note. Judge cost is
// accumulated into *cost when given.
JudgeVerdict judge_semantic(const ModelResult& result,
                            const std::vector<std::vector<std::uint8_t>>& stage1_images,
                            const SemanticPromptLayout& layout, Backend& backend,
                            const QueryOptions& options = {}, CostRecord* cost = nullptr);

// Binary judge over one best-view image and assigned material.
// `label_for_judge` must already be "unknown" when the semantic verdict was
// incorrect.
JudgeVerdict judge_material(const MaterialAssignment& assignment,
                            const std::string& model_id,
                            const std::string& label_for_judge,
                            const MaterialPalette& palette,
                            const std::vector<std::uint8_t>& best_view_png,
                            Backend& backend, const QueryOptions& options = {},
                            CostRecord* cost = nullptr);

struct EvalCounts {
    std::size_t total = 0;           // processed (non-skipped) models
    std::size_t confident = 0;
    std::size_t judged_models = 0;   // models with at least one assignment
    std::size_t judged_segments = 0;
};

struct MetricsSummary {
    double model_confidence = 0.0;                  // M_c, percent
    std::optional<double> semantic_accuracy;        // S_a, percent
    std::optional<double> material_accuracy;        // M_a, percent
    std::optional<double> mean_segment_accuracy;    // sigma_a, percent
    EvalCounts counts;
};

// Computes M_c / S_a / M_a / sigma_a. Requires the verdicts to cover every
// confident model and every assignment of every judged model; a verdict
// pointing at an unknown model or segment raises SchemaError.
MetricsSummary compute_metrics(const std::vector<ModelResult>& results,
                               const std::vector<JudgeVerdict>& verdicts);

struct CostRow {
    std::string stage;
    double queries = 0.0;
    double wall_seconds = 0.0;
    double tokens = 0.0;
};

// Per-stage per-model averages plus a total row (the total of averages).
// The optional judge record is averaged over `judged_models`.
std::vector<CostRow> cost_summary(const std::vector<ModelResult>& results,
                                  const CostRecord* judge_cost = nullptr,
                                  std::size_t judged_models = 0);

struct EvaluationOptions {
    QueryOptions query;
    int parallelism = 1;
};

struct EvaluationResult {
    std::vector<JudgeVerdict> verdicts;  // ordered by model, semantic first
    MetricsSummary metrics;
    std::vector<CostRow> cost_table;
    CostRecord judge_cost{CostStage::judge};
};

using ImageLoader =
    std::function<std::optional<std::vector<std::uint8_t>>(const std::string& path)>;

// Runs both judges across a batch, then computes metrics and the cost table.
// Missing or unloadable images force incorrect verdicts with notes.
EvaluationResult evaluate_models(const std::vector<ModelResult>& models,
                                 const MaterialPalette& palette, Backend& judge_backend,
                                 const ImageLoader& load_image,
                                 const EvaluationOptions& options = {});

}  // namespace geomat
