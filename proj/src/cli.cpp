#include "geomat/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "geomat/eval.hpp"
#include "geomat/image_io.hpp"
#include "geomat/report.hpp"

namespace geomat::cli {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& context) {
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.contains(key)) {
            throw InputError("unknown key \"" + key + "\" in " + context);
        }
    }
}

BackendSpec backend_from_json(const json& j, const BackendSpec& base,
                              const std::string& context) {
    check_keys(j, {"kind", "mock_script", "endpoint", "model", "max_in_flight",
                   "retry_base_seconds"},
               context);
    BackendSpec spec = base;
    spec.kind = j.value("kind", spec.kind);
    if (spec.kind != "mock" && spec.kind != "live") {
        throw InputError(context + ".kind must be \"mock\" or \"live\"");
    }
    spec.mock_script = j.value("mock_script", spec.mock_script);
    spec.endpoint = j.value("endpoint", spec.endpoint);
    spec.model = j.value("model", spec.model);
    spec.max_in_flight = j.value("max_in_flight", spec.max_in_flight);
    spec.retry_base_seconds = j.value("retry_base_seconds", spec.retry_base_seconds);
    return spec;
}

json backend_to_json(const BackendSpec& spec) {
    return {
        {"kind", spec.kind},
        {"mock_script", spec.mock_script},
        {"endpoint", spec.endpoint},
        {"model", spec.model},
        {"max_in_flight", spec.max_in_flight},
        {"retry_base_seconds", spec.retry_base_seconds},
    };
}

}  // namespace

CliConfig config_from_json(const json& doc, const CliConfig& base) {
    if (!doc.is_object()) {
        throw InputError("config must be a JSON object");
    }
    check_keys(doc, {"pipeline", "render", "backend", "judge_backend", "dataset",
                     "output_dir", "parallelism"},
               "config");
    CliConfig cfg = base;

    if (doc.contains("pipeline")) {
        const json& p = doc["pipeline"];
        check_keys(p, {"semantic_views", "semantic_threshold", "view_select", "materials",
                       "max_segments", "ablation", "seed", "allow_unsegmented", "query"},
                   "config.pipeline");
        cfg.pipeline.semantic_views = p.value("semantic_views", cfg.pipeline.semantic_views);
        cfg.pipeline.semantic_threshold =
            p.value("semantic_threshold", cfg.pipeline.semantic_threshold);
        if (p.contains("view_select")) {
            const json& v = p["view_select"];
            check_keys(v, {"camera_count", "visibility_floor", "weights"},
                       "config.pipeline.view_select");
            cfg.pipeline.view_select.camera_count =
                v.value("camera_count", cfg.pipeline.view_select.camera_count);
            cfg.pipeline.view_select.visibility_floor =
                v.value("visibility_floor", cfg.pipeline.view_select.visibility_floor);
            if (v.contains("weights")) {
                const json& w = v["weights"];
                check_keys(w, {"alpha", "beta", "gamma"},
                           "config.pipeline.view_select.weights");
                cfg.pipeline.view_select.weights.alpha =
                    w.value("alpha", cfg.pipeline.view_select.weights.alpha);
                cfg.pipeline.view_select.weights.beta =
                    w.value("beta", cfg.pipeline.view_select.weights.beta);
                cfg.pipeline.view_select.weights.gamma =
                    w.value("gamma", cfg.pipeline.view_select.weights.gamma);
            }
        }
        if (p.contains("materials")) {
            cfg.pipeline.palette.materials = p["materials"].get<std::vector<std::string>>();
        }
        cfg.pipeline.max_segments = p.value("max_segments", cfg.pipeline.max_segments);
        if (p.contains("ablation")) {
            const json& a = p["ablation"];
            check_keys(a, {"skip_semantics", "depth_only", "raster_only"},
                       "config.pipeline.ablation");
            cfg.pipeline.ablation.skip_semantics =
                a.value("skip_semantics", cfg.pipeline.ablation.skip_semantics);
            cfg.pipeline.ablation.depth_only =
                a.value("depth_only", cfg.pipeline.ablation.depth_only);
            cfg.pipeline.ablation.raster_only =
                a.value("raster_only", cfg.pipeline.ablation.raster_only);
        }
        cfg.pipeline.seed = p.value("seed", cfg.pipeline.seed);
        cfg.pipeline.load.allow_unsegmented =
            p.value("allow_unsegmented", cfg.pipeline.load.allow_unsegmented);
        if (p.contains("query")) {
            const json& q = p["query"];
            check_keys(q, {"max_attempts", "backoff_base_seconds"},
                       "config.pipeline.query");
            cfg.pipeline.query.max_attempts =
                q.value("max_attempts", cfg.pipeline.query.max_attempts);
            cfg.pipeline.query.backoff_base_seconds =
                q.value("backoff_base_seconds", cfg.pipeline.query.backoff_base_seconds);
        }
    }

    if (doc.contains("render")) {
        const json& r = doc["render"];
        check_keys(r, {"width", "height", "splat_radius", "fov_degrees",
                       "camera_distance_factor"},
                   "config.render");
        cfg.pipeline.render.width = r.value("width", cfg.pipeline.render.width);
        cfg.pipeline.render.height = r.value("height", cfg.pipeline.render.height);
        cfg.pipeline.render.splat_radius =
            r.value("splat_radius", cfg.pipeline.render.splat_radius);
        cfg.pipeline.render.fov_degrees =
            r.value("fov_degrees", cfg.pipeline.render.fov_degrees);
        cfg.pipeline.render.camera_distance_factor =
            r.value("camera_distance_factor", cfg.pipeline.render.camera_distance_factor);
    }

    if (doc.contains("backend")) {
        cfg.backend = backend_from_json(doc["backend"], cfg.backend, "config.backend");
    }
    if (doc.contains("judge_backend")) {
        cfg.judge_backend =
            backend_from_json(doc["judge_backend"], cfg.judge_backend, "config.judge_backend");
    }
    if (doc.contains("dataset")) {
        cfg.dataset = doc["dataset"].get<std::vector<std::string>>();
    }
    cfg.output_dir = doc.value("output_dir", cfg.output_dir);
    cfg.parallelism = doc.value("parallelism", cfg.parallelism);
    return cfg;
}

json config_echo_json(const CliConfig& config) {
    const PipelineConfig& p = config.pipeline;
    return {
        {"pipeline",
         {{"semantic_views", p.semantic_views},
          {"semantic_threshold", p.semantic_threshold},
          {"view_select",
           {{"camera_count", p.view_select.camera_count},
            {"visibility_floor", p.view_select.visibility_floor},
            {"weights",
             {{"alpha", p.view_select.weights.alpha},
              {"beta", p.view_select.weights.beta},
              {"gamma", p.view_select.weights.gamma}}}}},
          {"materials", p.palette.materials},
          {"max_segments", p.max_segments},
          {"ablation",
           {{"skip_semantics", p.ablation.skip_semantics},
            {"depth_only", p.ablation.depth_only},
            {"raster_only", p.ablation.raster_only}}},
          {"seed", p.seed},
          {"allow_unsegmented", p.load.allow_unsegmented},
          {"query",
           {{"max_attempts", p.query.max_attempts},
            {"backoff_base_seconds", p.query.backoff_base_seconds}}}}},
        {"render",
         {{"width", p.render.width},
          {"height", p.render.height},
          {"splat_radius", p.render.splat_radius},
          {"fov_degrees", p.render.fov_degrees},
          {"camera_distance_factor", p.render.camera_distance_factor}}},
        {"backend", backend_to_json(config.backend)},
        {"judge_backend", backend_to_json(config.judge_backend)},
        {"dataset", config.dataset},
    };
}

namespace {

bool has_wildcard(const std::string& s) {
    return s.find('*') != std::string::npos || s.find('?') != std::string::npos;
}

bool glob_match(const char* pattern, const char* name) {
    for (; *pattern != '\0'; ++pattern, ++name) {
        if (*pattern == '*') {
            while (*pattern == '*') {
                ++pattern;
            }
            if (*pattern == '\0') {
                return true;
            }
            for (; *name != '\0'; ++name) {
                if (glob_match(pattern, name)) {
                    return true;
                }
            }
            return false;
        }
        if (*name == '\0') {
            return false;
        }
        if (*pattern != '?' && *pattern != *name) {
            return false;
        }
    }
    return *name == '\0';
}

}  // namespace

std::vector<std::filesystem::path> expand_globs(const std::vector<std::string>& patterns) {
    namespace fs = std::filesystem;
    std::set<std::string> found;
    for (const std::string& pattern : patterns) {
        if (!has_wildcard(pattern)) {
            if (!fs::exists(pattern)) {
                throw InputError("no such file: " + pattern);
            }
            found.insert(pattern);
            continue;
        }
        fs::path p(pattern);
        fs::path dir = p.parent_path();
        std::string name = p.filename().string();
        if (has_wildcard(dir.string())) {
            throw InputError("wildcards are only supported in the filename: " + pattern);
        }
        fs::path scan = dir.empty() ? fs::path(".") : dir;
        if (!fs::is_directory(scan)) {
            throw InputError("no such directory: " + scan.string() + " (from " + pattern + ")");
        }
        bool any = false;
        for (const auto& entry : fs::directory_iterator(scan)) {
            if (!entry.is_regular_file()) {
                continue;
            }
            if (glob_match(name.c_str(), entry.path().filename().string().c_str())) {
                found.insert((dir.empty() ? entry.path().filename() : entry.path()).string());
                any = true;
            }
        }
        if (!any) {
            throw InputError("pattern matched no files: " + pattern);
        }
    }
    return {found.begin(), found.end()};
}

namespace {

namespace fs = std::filesystem;

std::unique_ptr<Backend> make_backend(const BackendSpec& spec) {
    if (spec.kind == "mock") {
        if (spec.mock_script.empty()) {
            throw InputError("mock backend requires a mock script (--mock-script)");
        }
        return std::make_unique<MockBackend>(MockBackend::from_file(spec.mock_script));
    }
    LiveBackendConfig live;
    live.base_url = spec.endpoint;
    live.model = spec.model;
    live.max_in_flight = spec.max_in_flight;
    return std::make_unique<LiveBackend>(live);  // throws without GEOMAT_API_KEY
}

ArtifactSink file_sink(const fs::path& outdir) {
    return [outdir](const std::string& model_id, ArtifactKind kind, int index,
                    const std::vector<std::uint8_t>& png) -> std::string {
        fs::path rel = fs::path("images") / model_id;
        fs::create_directories(outdir / rel);
        std::string name;
        switch (kind) {
            case ArtifactKind::stage1_depth:
                name = "view" + std::to_string(index) + "_depth.png";
                break;
            case ArtifactKind::stage1_raster:
                name = "view" + std::to_string(index) + "_raster.png";
                break;
            case ArtifactKind::best_view:
                name = "segment" + std::to_string(index) + "_best.png";
                break;
        }
        rel /= name;
        io::write_bytes(outdir / rel, png);
        return rel.generic_string();
    };
}

int cmd_render(const CliConfig& config, const std::string& model_path,
               std::optional<int> segment) {
    SegmentedPointCloud cloud = load_point_cloud(model_path, config.pipeline.load);
    SegmentedPointCloud normalized = normalize(cloud);
    OrthonormalFrame frame = principal_axes(normalized);
    double distance =
        config.pipeline.render.camera_distance_factor * frame.bounding_radius;

    fs::path outdir(config.output_dir);
    fs::create_directories(outdir);

    if (!segment) {
        std::vector<Camera> cams = semantic_view_cameras(
            frame, distance, config.pipeline.semantic_views);
        for (std::size_t i = 0; i < cams.size(); ++i) {
            cams[i].fov_degrees = config.pipeline.render.fov_degrees;
            RenderedView view = render_view(normalized, cams[i], config.pipeline.render,
                                            RenderMode::uniform);
            io::write_bytes(outdir / ("view" + std::to_string(i) + "_raster.png"),
                            raster_png(view));
            io::write_bytes(outdir / ("view" + std::to_string(i) + "_depth.png"),
                            depth_png(view));
        }
        std::cout << "wrote " << cams.size() << " raster and " << cams.size()
                  << " depth views to " << outdir.string() << "\n";
        return 0;
    }

    if (*segment < 0 || *segment >= normalized.segment_count) {
        throw InputError("segment " + std::to_string(*segment) + " out of range; cloud has " +
                         std::to_string(normalized.segment_count) + " segments");
    }
    ViewSelectConfig select = config.pipeline.view_select;
    select.seed = config.pipeline.seed;
    std::vector<Camera> cams = sample_sphere_cameras(select.camera_count, select.seed,
                                                     frame, distance);
    std::vector<CandidateScore> candidates;
    int best_index = -1;
    try {
        BestView best = best_view(normalized, *segment, frame, select,
                                  config.pipeline.render, &candidates);
        best_index = best.camera_index;
        io::write_bytes(outdir / "best.png", raster_png(best.view));
    } catch (const SegmentInvisibleError& err) {
        std::cout << "note: " << err.what() << "\n";
    }
    for (std::size_t i = 0; i < cams.size(); ++i) {
        cams[i].fov_degrees = config.pipeline.render.fov_degrees;
        RenderedView view = render_view(normalized, cams[i], config.pipeline.render,
                                        RenderMode::highlight, *segment);
        io::write_bytes(outdir / ("candidate" + std::to_string(i) + ".png"),
                        raster_png(view));
    }
    write_scores_csv(outdir / "scores.csv", candidates);
    std::cout << "wrote " << cams.size() << " candidate views and scores.csv to "
              << outdir.string();
    if (best_index >= 0) {
        std::cout << " (best camera: " << best_index << ")";
    }
    std::cout << "\n";
    return 0;
}

int cmd_infer(CliConfig config) {
    if (config.dataset.empty()) {
        throw InputError("no dataset given (positional paths or config \"dataset\")");
    }
    std::vector<fs::path> dataset = expand_globs(config.dataset);
    if (config.backend.kind == "mock") {
        config.pipeline.query.backoff_base_seconds = 0.0;
    } else {
        config.pipeline.query.backoff_base_seconds = config.backend.retry_base_seconds;
    }
    std::unique_ptr<Backend> backend = make_backend(config.backend);

    fs::path outdir(config.output_dir);
    fs::create_directories(outdir);

    BatchResult batch = run_batch(dataset, *backend, config.pipeline, config.parallelism,
                                  file_sink(outdir));

    json report = report_to_json(batch, config_echo_json(config));
    fs::path report_path = outdir / "report.json";
    std::ofstream out(report_path);
    if (!out) {
        throw InputError("cannot write " + report_path.string());
    }
    out << report.dump(2) << "\n";
    out.close();

    std::size_t skipped = 0, failed = 0, confident = 0;
    for (const ModelResult& m : batch.models) {
        skipped += m.skip_reason.has_value() ? 1 : 0;
        failed += m.failed ? 1 : 0;
        confident += m.confident() ? 1 : 0;
    }
    std::cout << "processed " << batch.models.size() << " models (" << confident
              << " confident, " << skipped << " skipped, " << failed << " failed); report: "
              << report_path.string() << "\n";
    return 0;
}

std::string percent_or_na(const std::optional<double>& v) {
    if (!v) {
        return "n/a";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f %%", *v);
    return buf;
}

std::string percent_or_na(double v) { return percent_or_na(std::optional<double>(v)); }

int cmd_evaluate(CliConfig config, const std::string& report_path,
                 const std::string& cost_csv) {
    std::ifstream in(report_path);
    if (!in) {
        throw InputError("cannot open report: " + report_path);
    }
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        throw SchemaError("report is not valid JSON: " + report_path);
    }
    ParsedReport report = parse_report(doc);

    MaterialPalette palette = MaterialPalette::defaults();
    if (report.config_echo.contains("pipeline") &&
        report.config_echo["pipeline"].contains("materials")) {
        palette.materials =
            report.config_echo["pipeline"]["materials"].get<std::vector<std::string>>();
    }

    if (config.judge_backend.kind == "mock") {
        config.pipeline.query.backoff_base_seconds = 0.0;
    } else {
        config.pipeline.query.backoff_base_seconds =
            config.judge_backend.retry_base_seconds;
    }
    std::unique_ptr<Backend> judge = make_backend(config.judge_backend);

    fs::path report_dir = fs::path(report_path).parent_path();
    ImageLoader loader =
        [report_dir](const std::string& rel) -> std::optional<std::vector<std::uint8_t>> {
        fs::path p = report_dir / rel;
        std::ifstream f(p, std::ios::binary);
        if (!f) {
            return std::nullopt;
        }
        return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)),
                                         std::istreambuf_iterator<char>());
    };

    EvaluationOptions options;
    options.query = config.pipeline.query;
    options.parallelism = config.parallelism;
    EvaluationResult evaluation =
        evaluate_models(report.batch.models, palette, *judge, loader, options);

    json verdicts = json::array();
    for (const JudgeVerdict& v : evaluation.verdicts) {
        verdicts.push_back({
            {"kind", v.kind == JudgeTargetKind::semantic ? "semantic" : "material"},
            {"model_id", v.model_id},
            {"segment", v.kind == JudgeTargetKind::material ? json(v.segment) : json(nullptr)},
            {"verdict", v.correct ? "correct" : "incorrect"},
            {"raw_response", v.raw_response},
            {"note", v.note},
        });
    }
    auto opt_json = [](const std::optional<double>& v) {
        return v ? json(*v) : json(nullptr);
    };
    json cost_table = json::array();
    for (const CostRow& row : evaluation.cost_table) {
        cost_table.push_back({{"stage", row.stage},
                              {"queries", row.queries},
                              {"wall_seconds", row.wall_seconds},
                              {"tokens", row.tokens}});
    }
    const MetricsSummary& metrics = evaluation.metrics;
    json out_doc = {
        {"verdicts", std::move(verdicts)},
        {"metrics",
         {{"M_c", metrics.model_confidence},
          {"S_a", opt_json(metrics.semantic_accuracy)},
          {"M_a", opt_json(metrics.material_accuracy)},
          {"sigma_a", opt_json(metrics.mean_segment_accuracy)},
          {"counts",
           {{"total", metrics.counts.total},
            {"confident", metrics.counts.confident},
            {"judged_models", metrics.counts.judged_models},
            {"judged_segments", metrics.counts.judged_segments}}}}},
        {"cost_table", std::move(cost_table)},
    };

    fs::path outdir(config.output_dir);
    fs::create_directories(outdir);
    fs::path eval_path = outdir / "evaluation.json";
    std::ofstream out(eval_path);
    if (!out) {
        throw InputError("cannot write " + eval_path.string());
    }
    out << out_doc.dump(2) << "\n";
    out.close();

    char line[160];
    std::snprintf(line, sizeof line, "M_c (model confidence)        %8s  [%zu/%zu models]",
                  percent_or_na(metrics.model_confidence).c_str(),
                  metrics.counts.confident, metrics.counts.total);
    std::cout << line << "\n";
    std::snprintf(line, sizeof line, "S_a (semantic accuracy)       %8s  [%zu confident]",
                  percent_or_na(metrics.semantic_accuracy).c_str(), metrics.counts.confident);
    std::cout << line << "\n";
    std::snprintf(line, sizeof line, "M_a (material accuracy)       %8s  [%zu judged models]",
                  percent_or_na(metrics.material_accuracy).c_str(),
                  metrics.counts.judged_models);
    std::cout << line << "\n";
    std::snprintf(line, sizeof line, "sigma_a (mean segment acc.)   %8s  [%zu segments]",
                  percent_or_na(metrics.mean_segment_accuracy).c_str(),
                  metrics.counts.judged_segments);
    std::cout << line << "\n";

    std::cout << "\nstage        Q         t (s)      tokens\n";
    for (const CostRow& row : evaluation.cost_table) {
        std::snprintf(line, sizeof line, "%-10s %9.3f %10.3f %11.1f", row.stage.c_str(),
                      row.queries, row.wall_seconds, row.tokens);
        std::cout << line << "\n";
    }
    std::cout << "\nevaluation: " << eval_path.string() << "\n";

    if (!cost_csv.empty()) {
        std::ofstream csv(cost_csv);
        if (!csv) {
            throw InputError("cannot write " + cost_csv);
        }
        csv << "stage,Q,t,tau\n";
        for (const CostRow& row : evaluation.cost_table) {
            std::snprintf(line, sizeof line, "%s,%.6f,%.6f,%.6f\n", row.stage.c_str(),
                          row.queries, row.wall_seconds, row.tokens);
            csv << line;
        }
    }
    return 0;
}

}  // namespace

int run_main(int argc, const char* const* argv) {
    CLI::App app{"material composition inference for segmented point clouds"};
    app.require_subcommand(1);

    std::string config_path;
    std::string output_dir;
    int parallelism = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("-o,--out", output_dir, "output directory");
    app.add_option("--parallelism", parallelism, "concurrent models");
    app.add_option("--seed", seed, "camera sampling seed")->each([&](const std::string&) {
        seed_set = true;
    });

    // render
    CLI::App* render = app.add_subcommand("render", "debug renders of one model");
    render->fallthrough();
    std::string render_model;
    int render_segment = -1;
    bool render_segment_set = false;
    render->add_option("model", render_model, "point cloud file")->required();
    render->add_option("--segment", render_segment, "render stage-2 candidate views of this segment")
        ->each([&](const std::string&) { render_segment_set = true; });

    // shared pipeline flags (infer; a few also make sense for render)
    CLI::App* infer = app.add_subcommand("infer", "run the two-stage pipeline");
    infer->fallthrough();
    std::vector<std::string> infer_dataset;
    infer->add_option("dataset", infer_dataset, "point cloud files or globs");
    std::string backend_kind, mock_script, endpoint, model_name;
    int max_in_flight = 0;
    infer->add_option("--backend", backend_kind, "mock | live");
    infer->add_option("--mock-script", mock_script, "scripted responses for the mock backend");
    infer->add_option("--endpoint", endpoint, "live endpoint base URL");
    infer->add_option("--model", model_name, "live model name");
    infer->add_option("--max-in-flight", max_in_flight, "concurrent requests");
    bool no_semantics = false, depth_only = false, raster_only = false;
    infer->add_flag("--no-semantics", no_semantics, "skip stage 1; stage 2 sees \"unknown\"");
    infer->add_flag("--depth-only", depth_only, "stage 1 sees only depth maps");
    infer->add_flag("--raster-only", raster_only, "stage 1 sees only raster projections");
    int views = 0, eps_s = -1, cameras = 0, max_segments = 0, max_attempts = 0;
    double eps_v = -1.0, alpha = -1.0, beta = -1.0, gamma = -1.0;
    infer->add_option("--views", views, "semantic views: 4, 8, or 12");
    infer->add_option("--eps-s", eps_s, "semantic confidence threshold (0-100)");
    infer->add_option("--eps-v", eps_v, "visibility floor for view selection");
    infer->add_option("--cameras", cameras, "stage-2 candidate cameras");
    infer->add_option("--alpha", alpha, "entropy weight");
    infer->add_option("--beta", beta, "depth-spread weight");
    infer->add_option("--gamma", gamma, "visibility weight");
    std::string materials;
    infer->add_option("--materials", materials, "comma-separated material palette");
    infer->add_option("--max-segments", max_segments, "skip clouds with more segments");
    infer->add_option("--max-attempts", max_attempts, "query attempts before giving up");
    bool allow_unsegmented = false;
    infer->add_flag("--allow-unsegmented", allow_unsegmented,
                    "map unlabeled points to segment 0");
    int render_width = 0, render_height = 0, splat_radius = 0;
    infer->add_option("--width", render_width, "render width");
    infer->add_option("--height", render_height, "render height");
    infer->add_option("--splat-radius", splat_radius, "point splat radius in pixels");

    render->add_option("--cameras", cameras, "stage-2 candidate cameras");
    render->add_flag("--allow-unsegmented", allow_unsegmented,
                     "map unlabeled points to segment 0");
    render->add_option("--width", render_width, "render width");
    render->add_option("--height", render_height, "render height");
    render->add_option("--splat-radius", splat_radius, "point splat radius in pixels");
    render->add_option("--views", views, "semantic views: 4, 8, or 12");

    // evaluate
    CLI::App* evaluate = app.add_subcommand("evaluate", "judge a report and print metrics");
    evaluate->fallthrough();
    std::string report_path, judge_kind, judge_mock_script, judge_endpoint, judge_model;
    std::string cost_csv;
    evaluate->add_option("report", report_path, "report.json from infer")->required();
    evaluate->add_option("--judge-backend", judge_kind, "mock | live");
    evaluate->add_option("--judge-mock-script", judge_mock_script,
                         "scripted responses for the judge mock");
    evaluate->add_option("--judge-endpoint", judge_endpoint, "judge endpoint base URL");
    evaluate->add_option("--judge-model", judge_model, "judge model name");
    evaluate->add_option("--cost-csv", cost_csv, "also write the cost table as CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        CliConfig config;
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) {
                throw InputError("cannot open config: " + config_path);
            }
            json doc = json::parse(in, nullptr, false);
            if (doc.is_discarded()) {
                throw InputError("config is not valid JSON: " + config_path);
            }
            config = config_from_json(doc, config);
        }

        // Flags beat the file, which beats the built-in defaults.
        if (!output_dir.empty()) config.output_dir = output_dir;
        if (parallelism > 0) config.parallelism = parallelism;
        if (seed_set) config.pipeline.seed = seed;
        if (!backend_kind.empty()) config.backend.kind = backend_kind;
        if (!mock_script.empty()) config.backend.mock_script = mock_script;
        if (!endpoint.empty()) config.backend.endpoint = endpoint;
        if (!model_name.empty()) config.backend.model = model_name;
        if (max_in_flight > 0) config.backend.max_in_flight = max_in_flight;
        if (no_semantics) config.pipeline.ablation.skip_semantics = true;
        if (depth_only) config.pipeline.ablation.depth_only = true;
        if (raster_only) config.pipeline.ablation.raster_only = true;
        if (views > 0) config.pipeline.semantic_views = views;
        if (eps_s >= 0) config.pipeline.semantic_threshold = eps_s;
        if (eps_v >= 0.0) config.pipeline.view_select.visibility_floor = eps_v;
        if (cameras > 0) config.pipeline.view_select.camera_count = cameras;
        if (alpha >= 0.0) config.pipeline.view_select.weights.alpha = alpha;
        if (beta >= 0.0) config.pipeline.view_select.weights.beta = beta;
        if (gamma >= 0.0) config.pipeline.view_select.weights.gamma = gamma;
        if (!materials.empty()) {
            std::vector<std::string> list;
            std::string item;
            std::stringstream ss(materials);
            while (std::getline(ss, item, ',')) {
                std::size_t b = item.find_first_not_of(' ');
                std::size_t e = item.find_last_not_of(' ');
                if (b != std::string::npos) {
                    list.push_back(item.substr(b, e - b + 1));
                }
            }
            config.pipeline.palette.materials = std::move(list);
        }
        if (max_segments > 0) config.pipeline.max_segments = max_segments;
        if (max_attempts > 0) config.pipeline.query.max_attempts = max_attempts;
        if (allow_unsegmented) config.pipeline.load.allow_unsegmented = true;
        if (render_width > 0) config.pipeline.render.width = render_width;
        if (render_height > 0) config.pipeline.render.height = render_height;
        if (splat_radius > 0) config.pipeline.render.splat_radius = splat_radius;
        if (!judge_kind.empty()) config.judge_backend.kind = judge_kind;
        if (!judge_mock_script.empty()) config.judge_backend.mock_script = judge_mock_script;
        if (!judge_endpoint.empty()) config.judge_backend.endpoint = judge_endpoint;
        if (!judge_model.empty()) config.judge_backend.model = judge_model;

        config.pipeline.validate();

        if (render->parsed()) {
            return cmd_render(config, render_model,
                              render_segment_set ? std::optional<int>(render_segment)
                                                 : std::nullopt);
        }
        if (infer->parsed()) {
            if (!infer_dataset.empty()) {
                config.dataset = infer_dataset;
            }
            return cmd_infer(std::move(config));
        }
        return cmd_evaluate(std::move(config), report_path, cost_csv);
    } catch (const SchemaError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 3;
    } catch (const BackendError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 4;
    } catch (const InputError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    }
}

}  // namespace geomat::cli
