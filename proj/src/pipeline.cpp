#include "geomat/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <thread>

namespace geomat {

void PipelineConfig::validate() const {
    if (semantic_views != 4 && semantic_views != 8 && semantic_views != 12) {
        throw InputError("semantic_views must be 4, 8, or 12");
    }
    if (semantic_threshold < 0 || semantic_threshold > 100) {
        throw InputError("semantic_threshold must lie in [0, 100]");
    }
    if (max_segments < 1) {
        throw InputError("max_segments must be at least 1");
    }
    if (ablation.depth_only && ablation.raster_only) {
        throw InputError("depth_only and raster_only are mutually exclusive");
    }
    view_select.validate();
    palette.validate();
    render.validate();
}

StageOneResult stage1_semantics(const SegmentedPointCloud& cloud, Backend& backend,
                                const PipelineConfig& config) {
    config.validate();
    StageOneResult result;

    OrthonormalFrame frame = principal_axes(cloud);
    double distance = config.render.camera_distance_factor * frame.bounding_radius;
    std::vector<Camera> cams =
        semantic_view_cameras(frame, distance, config.semantic_views);
    for (Camera& cam : cams) {
        cam.fov_degrees = config.render.fov_degrees;
    }

    for (const Camera& cam : cams) {
        RenderedView view = render_view(cloud, cam, config.render, RenderMode::uniform);
        if (!config.ablation.raster_only) {
            result.depth_pngs.push_back(depth_png(view));
        }
        if (!config.ablation.depth_only) {
            result.raster_pngs.push_back(raster_png(view));
        }
    }

    SemanticPromptLayout layout;
    layout.depth_views = config.ablation.raster_only ? 0 : config.semantic_views;
    layout.raster_views = config.ablation.depth_only ? 0 : config.semantic_views;

    ChatRequest request;
    request.prompt = build_semantic_prompt(layout);
    request.images = result.depth_pngs;
    request.images.insert(request.images.end(), result.raster_pngs.begin(),
                          result.raster_pngs.end());
    request.stage = "semantic";
    request.model_id = cloud.model_id;

    auto check = [&](const std::string& text) {
        return parse_semantic_response(text, config.semantic_threshold).status ==
                       SemanticStatus::parse_failure
                   ? TextCheck::malformed
                   : TextCheck::accept;
    };

    try {
        QueryOutcome outcome =
            run_query(backend, request, CostStage::semantic, check, config.query);
        result.cost = outcome.cost;
        if (outcome.final_check == TextCheck::accept) {
            result.semantic =
                parse_semantic_response(outcome.text, config.semantic_threshold);
        } else {
            result.semantic = SemanticOutcome{};  // parse_failure
            result.note = "semantic response unparsable after retries";
        }
    } catch (const BackendError& err) {
        result.cost.queries = config.query.max_attempts;
        result.backend_failed = true;
        result.note = std::string("semantic stage backend failure: ") + err.what();
    }
    return result;
}

StageTwoResult stage2_materials(const SegmentedPointCloud& cloud, const std::string& label,
                                Backend& backend, const PipelineConfig& config) {
    config.validate();
    if (cloud.segment_count > config.max_segments) {
        throw InputError("cloud has more segments than max_segments allows");
    }
    if (label.empty()) {
        throw InputError("stage 2 needs a nonempty object label");
    }

    StageTwoResult result;
    OrthonormalFrame frame = principal_axes(cloud);
    ViewSelectConfig select = config.view_select;
    select.seed = config.seed;

    const std::string prompt = build_material_prompt(label, config.palette);

    for (int segment = 0; segment < cloud.segment_count; ++segment) {
        MaterialAssignment assignment;
        assignment.segment = segment;

        BestView best;
        try {
            best = best_view(cloud, segment, frame, select, config.render);
        } catch (const SegmentInvisibleError& err) {
            assignment.note = err.what();
            result.notes.push_back("segment " + std::to_string(segment) + ": " +
                                   err.what());
            result.assignments.push_back(std::move(assignment));
            result.best_view_pngs.emplace_back();
            continue;
        }
        assignment.best_view_score = best.score;
        assignment.best_view_camera = best.view.camera;
        assignment.camera_index = best.camera_index;

        ChatRequest request;
        request.prompt = prompt;
        request.images.push_back(raster_png(best.view));
        request.stage = "material";
        request.model_id = cloud.model_id;
        request.segment = segment;

        auto check = [&](const std::string& text) {
            switch (parse_material_response(text, config.palette).result) {
                case MaterialParseResult::ok: return TextCheck::accept;
                case MaterialParseResult::off_palette: return TextCheck::off_palette;
                case MaterialParseResult::parse_failure: return TextCheck::malformed;
            }
            return TextCheck::malformed;
        };

        try {
            QueryOutcome outcome =
                run_query(backend, request, CostStage::material, check, config.query);
            result.cost.merge(outcome.cost);
            MaterialParse parsed = parse_material_response(outcome.text, config.palette);
            switch (outcome.final_check) {
                case TextCheck::accept:
                    assignment.material = parsed.material;
                    assignment.confidence = parsed.confidence;
                    break;
                case TextCheck::off_palette:
                    assignment.note = "off-palette material \"" + parsed.material +
                                      "\" after retry; mapped to unknown";
                    result.notes.push_back("segment " + std::to_string(segment) + ": " +
                                           assignment.note);
                    break;
                case TextCheck::malformed:
                    assignment.note = "material response unparsable after retries";
                    result.notes.push_back("segment " + std::to_string(segment) + ": " +
                                           assignment.note);
                    break;
            }
        } catch (const BackendError& err) {
            result.cost.queries += config.query.max_attempts;
            assignment.note = std::string("backend failure: ") + err.what();
            result.notes.push_back("segment " + std::to_string(segment) + ": " +
                                   assignment.note);
        }
        result.assignments.push_back(std::move(assignment));
        result.best_view_pngs.push_back(std::move(request.images[0]));
    }
    return result;
}

namespace {

void sink_stage1(ModelResult& result, const StageOneResult& s1, const ArtifactSink& sink) {
    for (std::size_t i = 0; i < s1.depth_pngs.size(); ++i) {
        result.stage1_depth_paths.push_back(
            sink ? sink(result.model_id, ArtifactKind::stage1_depth, int(i), s1.depth_pngs[i])
                 : std::string{});
    }
    for (std::size_t i = 0; i < s1.raster_pngs.size(); ++i) {
        result.stage1_raster_paths.push_back(
            sink ? sink(result.model_id, ArtifactKind::stage1_raster, int(i), s1.raster_pngs[i])
                 : std::string{});
    }
}

void sink_stage2(ModelResult& result, const StageTwoResult& s2, const ArtifactSink& sink) {
    for (std::size_t i = 0; i < s2.assignments.size(); ++i) {
        const std::vector<std::uint8_t>& png = s2.best_view_pngs[i];
        if (png.empty() || !sink) {
            result.segment_image_paths.emplace_back();
        } else {
            result.segment_image_paths.push_back(
                sink(result.model_id, ArtifactKind::best_view,
                     s2.assignments[i].segment, png));
        }
    }
}

}  // namespace

ModelResult run_model(const SegmentedPointCloud& cloud, Backend& backend,
                      const PipelineConfig& config, const ArtifactSink& sink) {
    config.validate();
    ModelResult result;
    result.model_id = cloud.model_id;

    SegmentedPointCloud normalized;
    try {
        normalized = normalize(cloud);
    } catch (const InputError& err) {
        result.failed = true;
        result.failure_notes.push_back(std::string("normalize: ") + err.what());
        return result;
    }

    std::string stage2_label;
    if (config.ablation.skip_semantics) {
        // The no-semantics baseline: stage 2 sees "unknown" for every model.
        result.semantic = SemanticOutcome{"unknown", 0, SemanticStatus::unknown};
        result.failure_notes.push_back("semantic stage skipped (ablation)");
        stage2_label = "unknown";
    } else {
        StageOneResult s1 = stage1_semantics(normalized, backend, config);
        result.semantic = s1.semantic;
        result.costs.push_back(s1.cost);
        sink_stage1(result, s1, sink);
        if (s1.backend_failed) {
            result.failed = true;
            result.failure_notes.push_back(s1.note);
            return result;
        }
        if (!s1.note.empty()) {
            result.failure_notes.push_back(s1.note);
        }
        if (result.semantic.status != SemanticStatus::confident) {
            return result;  // semantic failure: excluded from stage 2
        }
        stage2_label = result.semantic.label;
    }

    StageTwoResult s2 = stage2_materials(normalized, stage2_label, backend, config);
    result.costs.push_back(s2.cost);
    for (const std::string& note : s2.notes) {
        result.failure_notes.push_back(note);
    }
    sink_stage2(result, s2, sink);
    result.assignments = std::move(s2.assignments);
    return result;
}

void CostLedger::add(const CostRecord& record) {
    switch (record.stage) {
        case CostStage::semantic: semantic.merge(record); break;
        case CostStage::material: material.merge(record); break;
        case CostStage::judge: judge.merge(record); break;
    }
}

CostRecord CostLedger::total() const {
    CostRecord t{CostStage::semantic};
    t.merge(semantic);
    t.merge(material);
    t.merge(judge);
    return t;
}

BatchResult run_batch(const std::vector<std::filesystem::path>& dataset,
                      Backend& backend, const PipelineConfig& config, int parallelism,
                      const ArtifactSink& sink) {
    config.validate();

    struct Entry {
        std::filesystem::path path;
        std::string model_id;
    };
    std::vector<Entry> entries;
    entries.reserve(dataset.size());
    for (const auto& path : dataset) {
        entries.push_back({path, path.stem().string()});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.model_id != b.model_id) return a.model_id < b.model_id;
        return a.path.string() < b.path.string();
    });
    // Stem collisions get a deterministic suffix so ids stay unique.
    std::map<std::string, int> seen;
    for (Entry& e : entries) {
        int n = seen[e.model_id]++;
        if (n > 0) {
            e.model_id += "~" + std::to_string(n);
        }
    }

    BatchResult batch;
    batch.models.resize(entries.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= entries.size()) {
                return;
            }
            const Entry& entry = entries[i];
            ModelResult& slot = batch.models[i];
            try {
                SegmentedPointCloud cloud = load_point_cloud(entry.path, config.load);
                cloud.model_id = entry.model_id;
                if (cloud.segment_count > config.max_segments) {
                    slot.model_id = entry.model_id;
                    slot.skip_reason = "segment count " +
                                       std::to_string(cloud.segment_count) +
                                       " exceeds max_segments " +
                                       std::to_string(config.max_segments);
                } else {
                    slot = run_model(cloud, backend, config, sink);
                }
            } catch (const std::exception& err) {
                slot.model_id = entry.model_id;
                slot.failed = true;
                slot.failure_notes.push_back(err.what());
            }
            slot.source_path = entry.path.string();
        }
    };

    int workers = std::max(1, std::min<int>(parallelism, int(entries.size())));
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

    for (const ModelResult& model : batch.models) {
        for (const CostRecord& record : model.costs) {
            batch.ledger.add(record);
        }
    }
    return batch;
}

}  // namespace geomat
