#include "geomat/eval.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <set>
#include <thread>

namespace geomat {
namespace {

JudgeVerdict run_judge(Backend& backend, ChatRequest request, JudgeVerdict verdict,
                       const QueryOptions& options, CostRecord* cost) {
    auto check = [](const std::string& text) {
        return parse_judge_response(text).has_value() ? TextCheck::accept
                                                      : TextCheck::malformed;
    };
    try {
        QueryOutcome outcome =
            run_query(backend, request, CostStage::judge, check, options);
        if (cost != nullptr) {
            cost->merge(outcome.cost);
        }
        verdict.raw_response = outcome.text;
        if (outcome.final_check == TextCheck::accept) {
            verdict.correct = *parse_judge_response(outcome.text);
        } else {
            verdict.correct = false;
            verdict.note = "judge response unparsable after retries; counted incorrect";
        }
    } catch (const BackendError& err) {
        if (cost != nullptr) {
            CostRecord failed{CostStage::judge};
            failed.queries = options.max_attempts < 1 ? 1 : options.max_attempts;
            cost->merge(failed);
        }
        verdict.correct = false;
        verdict.note = std::string("judge backend failure; counted incorrect: ") + err.what();
    }
    return verdict;
}

}  // namespace

JudgeVerdict judge_semantic(const ModelResult& result,
                            const std::vector<std::vector<std::uint8_t>>& stage1_images,
                            const SemanticPromptLayout& layout, Backend& backend,
                            const QueryOptions& options, CostRecord* cost) {
    ChatRequest request;
    request.prompt = build_semantic_judge_prompt(result.semantic.label, layout);
    request.images = stage1_images;
    request.stage = "judge_semantic";
    request.model_id = result.model_id;

    JudgeVerdict verdict;
    verdict.kind = JudgeTargetKind::semantic;
    verdict.model_id = result.model_id;
    return run_judge(backend, std::move(request), std::move(verdict), options, cost);
}

JudgeVerdict judge_material(const MaterialAssignment& assignment,
                            const std::string& model_id,
                            const std::string& label_for_judge,
                            const MaterialPalette& palette,
                            const std::vector<std::uint8_t>& best_view_png,
                            Backend& backend, const QueryOptions& options,
                            CostRecord* cost) {
    ChatRequest request;
    request.prompt =
        build_material_judge_prompt(label_for_judge, palette, assignment.material);
    request.images.push_back(best_view_png);
    request.stage = "judge_material";
    request.model_id = model_id;
    request.segment = assignment.segment;

    JudgeVerdict verdict;
    verdict.kind = JudgeTargetKind::material;
    verdict.model_id = model_id;
    verdict.segment = assignment.segment;
    return run_judge(backend, std::move(request), std::move(verdict), options, cost);
}

MetricsSummary compute_metrics(const std::vector<ModelResult>& results,
                               const std::vector<JudgeVerdict>& verdicts) {
    std::map<std::string, const ModelResult*> by_id;
    for (const ModelResult& m : results) {
        if (!by_id.emplace(m.model_id, &m).second) {
            throw SchemaError("duplicate model id in results: " + m.model_id);
        }
    }

    std::map<std::string, bool> semantic_verdicts;
    std::map<std::pair<std::string, int>, bool> material_verdicts;
    for (const JudgeVerdict& v : verdicts) {
        auto it = by_id.find(v.model_id);
        if (it == by_id.end()) {
            throw SchemaError("verdict references unknown model: " + v.model_id);
        }
        const ModelResult& m = *it->second;
        if (v.kind == JudgeTargetKind::semantic) {
            if (!semantic_verdicts.emplace(v.model_id, v.correct).second) {
                throw SchemaError("duplicate semantic verdict for model: " + v.model_id);
            }
        } else {
            bool known = std::any_of(
                m.assignments.begin(), m.assignments.end(),
                [&](const MaterialAssignment& a) { return a.segment == v.segment; });
            if (!known) {
                throw SchemaError("verdict references unknown segment " +
                                  std::to_string(v.segment) + " of model " + v.model_id);
            }
            if (!material_verdicts.emplace(std::make_pair(v.model_id, v.segment), v.correct)
                     .second) {
                throw SchemaError("duplicate material verdict for model " + v.model_id +
                                  " segment " + std::to_string(v.segment));
            }
        }
    }

    MetricsSummary summary;
    std::size_t semantic_correct = 0;
    std::size_t models_all_correct = 0;
    double fraction_sum = 0.0;

    for (const ModelResult& m : results) {
        if (!m.processed()) {
            continue;
        }
        ++summary.counts.total;
        if (m.confident()) {
            ++summary.counts.confident;
            auto it = semantic_verdicts.find(m.model_id);
            if (it == semantic_verdicts.end()) {
                throw SchemaError("missing semantic verdict for confident model: " +
                                  m.model_id);
            }
            if (it->second) {
                ++semantic_correct;
            }
        }
        if (m.assignments.empty()) {
            continue;  // nothing to judge; excluded from M_a and sigma_a
        }
        ++summary.counts.judged_models;
        std::size_t correct = 0;
        for (const MaterialAssignment& a : m.assignments) {
            auto it = material_verdicts.find({m.model_id, a.segment});
            if (it == material_verdicts.end()) {
                throw SchemaError("missing material verdict for model " + m.model_id +
                                  " segment " + std::to_string(a.segment));
            }
            ++summary.counts.judged_segments;
            if (it->second) {
                ++correct;
            }
        }
        if (correct == m.assignments.size()) {
            ++models_all_correct;
        }
        fraction_sum += double(correct) / double(m.assignments.size());
    }

    summary.model_confidence =
        summary.counts.total == 0
            ? 0.0
            : 100.0 * double(summary.counts.confident) / double(summary.counts.total);
    if (summary.counts.confident > 0) {
        summary.semantic_accuracy =
            100.0 * double(semantic_correct) / double(summary.counts.confident);
    }
    if (summary.counts.judged_models > 0) {
        summary.material_accuracy = 100.0 * double(models_all_correct) /
                                    double(summary.counts.judged_models);
        summary.mean_segment_accuracy =
            100.0 * fraction_sum / double(summary.counts.judged_models);
    }
    return summary;
}

std::vector<CostRow> cost_summary(const std::vector<ModelResult>& results,
                                  const CostRecord* judge_cost,
                                  std::size_t judged_models) {
    CostRecord semantic{CostStage::semantic};
    CostRecord material{CostStage::material};
    std::size_t processed = 0;
    for (const ModelResult& m : results) {
        if (!m.processed()) {
            continue;
        }
        ++processed;
        for (const CostRecord& c : m.costs) {
            if (c.stage == CostStage::semantic) {
                semantic.merge(c);
            } else if (c.stage == CostStage::material) {
                material.merge(c);
            }
        }
    }

    auto row = [](const char* name, const CostRecord& r, std::size_t denom) {
        CostRow out;
        out.stage = name;
        if (denom > 0) {
            out.queries = double(r.queries) / double(denom);
            out.wall_seconds = r.wall_seconds / double(denom);
            out.tokens = double(r.total_tokens()) / double(denom);
        }
        return out;
    };

    std::vector<CostRow> rows;
    rows.push_back(row("semantic", semantic, processed));
    rows.push_back(row("material", material, processed));
    if (judge_cost != nullptr) {
        rows.push_back(row("judge", *judge_cost, judged_models));
    }
    CostRow total;
    total.stage = "total";
    for (const CostRow& r : rows) {
        total.queries += r.queries;
        total.wall_seconds += r.wall_seconds;
        total.tokens += r.tokens;
    }
    rows.push_back(total);
    return rows;
}

EvaluationResult evaluate_models(const std::vector<ModelResult>& models,
                                 const MaterialPalette& palette, Backend& judge_backend,
                                 const ImageLoader& load_image,
                                 const EvaluationOptions& options) {
    struct PerModel {
        std::vector<JudgeVerdict> verdicts;
        CostRecord cost{CostStage::judge};
    };
    std::vector<PerModel> partial(models.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= models.size()) {
                return;
            }
            const ModelResult& m = models[i];
            PerModel& out = partial[i];
            if (!m.processed()) {
                continue;
            }

            std::string label_for_judge = "unknown";
            if (m.confident()) {
                std::vector<std::vector<std::uint8_t>> images;
                bool images_ok = true;
                for (const auto* paths : {&m.stage1_depth_paths, &m.stage1_raster_paths}) {
                    for (const std::string& path : *paths) {
                        std::optional<std::vector<std::uint8_t>> blob =
                            path.empty() ? std::nullopt : load_image(path);
                        if (!blob) {
                            images_ok = false;
                            break;
                        }
                        images.push_back(std::move(*blob));
                    }
                }
                JudgeVerdict v;
                if (images_ok) {
                    SemanticPromptLayout layout;
                    layout.depth_views = int(m.stage1_depth_paths.size());
                    layout.raster_views = int(m.stage1_raster_paths.size());
                    v = judge_semantic(m, images, layout, judge_backend, options.query,
                                       &out.cost);
                } else {
                    v.kind = JudgeTargetKind::semantic;
                    v.model_id = m.model_id;
                    v.correct = false;
                    v.note = "stage-1 images unavailable; counted incorrect";
                }
                if (v.correct) {
                    label_for_judge = m.semantic.label;
                }
                out.verdicts.push_back(std::move(v));
            }

            for (std::size_t a = 0; a < m.assignments.size(); ++a) {
                const MaterialAssignment& assignment = m.assignments[a];
                const std::string& path = a < m.segment_image_paths.size()
                                              ? m.segment_image_paths[a]
                                              : std::string{};
                std::optional<std::vector<std::uint8_t>> blob =
                    path.empty() ? std::nullopt : load_image(path);
                if (!blob) {
                    JudgeVerdict v;
                    v.kind = JudgeTargetKind::material;
                    v.model_id = m.model_id;
                    v.segment = assignment.segment;
                    v.correct = false;
                    v.note = "best-view image unavailable; counted incorrect";
                    out.verdicts.push_back(std::move(v));
                    continue;
                }
                out.verdicts.push_back(judge_material(assignment, m.model_id,
                                                      label_for_judge, palette, *blob,
                                                      judge_backend, options.query,
                                                      &out.cost));
            }
        }
    };

    int workers = std::max(1, std::min<int>(options.parallelism, int(models.size())));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(std::size_t(workers));
        for (int t = 0; t < workers; ++t) {
            pool.emplace_back(worker);
        }
        for (std::thread& t : pool) {
            t.join();
        }
    }

    EvaluationResult result;
    for (PerModel& p : partial) {
        for (JudgeVerdict& v : p.verdicts) {
            result.verdicts.push_back(std::move(v));
        }
        result.judge_cost.merge(p.cost);
    }
    result.metrics = compute_metrics(models, result.verdicts);
    result.cost_table =
        cost_summary(models, &result.judge_cost, result.metrics.counts.judged_models);
    return result;
}

}  // namespace geomat
