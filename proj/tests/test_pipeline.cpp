#include "doctest.h"

#include "geomat/pipeline.hpp"
#include "geomat/report.hpp"
#include "testutil.hpp"

using namespace geomat;
using namespace testutil;

namespace {

// Three stacked slabs; every segment is visible from side-on directions.
SegmentedPointCloud three_slab_cloud(const std::string& id = "fixture") {
    SegmentedPointCloud cloud = make_cloud({}, {}, id);
    add_plane(cloud, -0.5, -0.7, 0.7, -0.7, 0.7, 30, 30, 0);
    add_plane(cloud, 0.0, -0.7, 0.7, -0.7, 0.7, 30, 30, 1);
    add_plane(cloud, 0.5, -0.7, 0.7, -0.7, 0.7, 30, 30, 2);
    cloud.model_id = id;
    return cloud;
}

PipelineConfig fast_config() {
    PipelineConfig config;
    config.render.width = 96;
    config.render.height = 96;
    config.view_select.camera_count = 6;
    config.seed = 17;
    return config;
}

std::vector<MockBackend::Rule> pot_rules() {
    return {
        {"semantic", std::nullopt, std::nullopt, R"([{"answer":"pot","confidence":85}])", 0},
        {"material", std::nullopt, 0, R"([{"material":"Metal","confidence":90}])", 0},
        {"material", std::nullopt, 1, R"([{"material":"Plastic","confidence":80}])", 0},
        {"material", std::nullopt, 2, R"([{"material":"Rubber","confidence":70}])", 0},
    };
}

}  // namespace

TEST_CASE("pipeline: config validation") {
    PipelineConfig config;
    CHECK_NOTHROW(config.validate());
    config.semantic_views = 5;
    CHECK_THROWS_AS(config.validate(), InputError);
    config.semantic_views = 8;
    config.semantic_threshold = 101;
    CHECK_THROWS_AS(config.validate(), InputError);
    config.semantic_threshold = 70;
    config.ablation.depth_only = true;
    config.ablation.raster_only = true;
    CHECK_THROWS_AS(config.validate(), InputError);
}

TEST_CASE("pipeline: stage 1 sends 16 images and applies the confidence gate") {
    SegmentedPointCloud cloud = normalize(three_slab_cloud());
    PipelineConfig config = fast_config();
    MockBackend backend(pot_rules());

    StageOneResult s1 = stage1_semantics(cloud, backend, config);
    CHECK(s1.semantic.status == SemanticStatus::confident);
    CHECK(s1.semantic.label == "pot");
    CHECK(s1.semantic.confidence == 85);
    CHECK(s1.cost.queries == 1);
    CHECK(s1.depth_pngs.size() == 8);
    CHECK(s1.raster_pngs.size() == 8);

    auto log = backend.transcript();
    REQUIRE(log.size() == 1);
    CHECK(log[0].stage == "semantic");
    CHECK(log[0].image_count == 16);
    CHECK(log[0].prompt.find("You will receive 16 renderings") != std::string::npos);
}

TEST_CASE("pipeline: low confidence means semantic failure and no stage 2") {
    SegmentedPointCloud cloud = normalize(three_slab_cloud());
    PipelineConfig config = fast_config();
    MockBackend backend(
        {{"semantic", std::nullopt, std::nullopt, R"([{"answer":"lamp","confidence":60}])", 0}});

    ModelResult result = run_model(cloud, backend, config);
    CHECK(result.semantic.status == SemanticStatus::low_confidence);
    CHECK(result.assignments.empty());
    for (const auto& entry : backend.transcript()) {
        CHECK(entry.stage == "semantic");
    }
}

TEST_CASE("pipeline: the confident path assigns one material per segment") {
    SegmentedPointCloud cloud = normalize(three_slab_cloud());
    PipelineConfig config = fast_config();
    MockBackend backend(pot_rules());

    ModelResult result = run_model(cloud, backend, config);
    CHECK(result.confident());
    CHECK(!result.failed);
    REQUIRE(result.assignments.size() == 3);
    CHECK(result.assignments[0].material == "Metal");
    CHECK(result.assignments[1].material == "Plastic");
    CHECK(result.assignments[2].material == "Rubber");
    for (const MaterialAssignment& a : result.assignments) {
        CHECK(a.camera_index >= 0);
        CHECK(a.best_view_score.visibility >= config.view_select.visibility_floor);
    }

    // 1 semantic query + k material queries.
    long total = 0;
    for (const CostRecord& c : result.costs) {
        total += c.queries;
    }
    CHECK(total == 4);

    // Stage separation: material queries carry exactly one image and the label.
    for (const auto& entry : backend.transcript()) {
        if (entry.stage == "material") {
            CHECK(entry.image_count == 1);
            CHECK(entry.prompt.find("Object name is: pot.") != std::string::npos);
        }
    }
}

TEST_CASE("pipeline: skip-semantics ablation queries materials with label unknown") {
    SegmentedPointCloud cloud = normalize(three_slab_cloud());
    PipelineConfig config = fast_config();
    config.ablation.skip_semantics = true;
    MockBackend backend(pot_rules());

    ModelResult result = run_model(cloud, backend, config);
    CHECK(result.semantic.status == SemanticStatus::unknown);
    CHECK(result.assignments.size() == 3);
    int material_queries = 0;
    for (const auto& entry : backend.transcript()) {
        CHECK(entry.stage != "semantic");
        if (entry.stage == "material") {
            ++material_queries;
            CHECK(entry.prompt.find("Object name is: unknown.") != std::string::npos);
        }
    }
    CHECK(material_queries == 3);
}

TEST_CASE("pipeline: depth-only and raster-only ablations halve the image set") {
    SegmentedPointCloud cloud = normalize(three_slab_cloud());
    PipelineConfig config = fast_config();
    config.ablation.depth_only = true;
    MockBackend backend(pot_rules());
    StageOneResult s1 = stage1_semantics(cloud, backend, config);
    CHECK(s1.depth_pngs.size() == 8);
    CHECK(s1.raster_pngs.empty());
    auto log = backend.transcript();
    CHECK(log[0].image_count == 8);
    CHECK(log[0].prompt.find("You will receive 8 renderings") != std::string::npos);
    CHECK(log[0].prompt.find("one image: a depth map") != std::string::npos);

    PipelineConfig raster_cfg = fast_config();
    raster_cfg.ablation.raster_only = true;
    MockBackend backend2(pot_rules());
    StageOneResult s2 = stage1_semantics(cloud, backend2, raster_cfg);
    CHECK(s2.depth_pngs.empty());
    CHECK(s2.raster_pngs.size() == 8);
    CHECK(backend2.transcript()[0].image_count == 8);
}

TEST_CASE("pipeline: reduced and extended view counts change the image count") {
    SegmentedPointCloud cloud = normalize(three_slab_cloud());
    for (int views : {4, 12}) {
        PipelineConfig config = fast_config();
        config.semantic_views = views;
        MockBackend backend(pot_rules());
        stage1_semantics(cloud, backend, config);
        CHECK(backend.transcript()[0].image_count == std::size_t(2 * views));
    }
}

TEST_CASE("pipeline: an invisible segment becomes unknown without a query") {
    SegmentedPointCloud cloud = make_cloud({}, {}, "shellbox");
    add_sphere_shell(cloud, {0, 0, 0}, 0.9, 30000, 0);
    for (int x = -2; x <= 2; ++x) {
        for (int y = -2; y <= 2; ++y) {
            for (int z = -2; z <= 2; ++z) {
                cloud.points.push_back({0.01 * x, 0.01 * y, 0.01 * z});
                cloud.segment_of.push_back(1);
            }
        }
    }
    cloud.segment_count = 2;
    cloud = normalize(cloud);

    PipelineConfig config = fast_config();
    // No rule for segment 1: a query for it would fail the test.
    MockBackend backend(
        {{"semantic", std::nullopt, std::nullopt, R"([{"answer":"ball","confidence":90}])", 0},
         {"material", std::nullopt, 0, R"([{"material":"Stone","confidence":60}])", 0}});

    ModelResult result = run_model(cloud, backend, config);
    REQUIRE(result.assignments.size() == 2);
    CHECK(result.assignments[0].material == "Stone");
    CHECK(result.assignments[1].material == "unknown");
    CHECK(result.assignments[1].camera_index == -1);
    CHECK(!result.assignments[1].note.empty());
    CHECK(!result.failure_notes.empty());
}

TEST_CASE("pipeline: off-palette and unparsable material responses degrade gracefully") {
    SegmentedPointCloud cloud = normalize(three_slab_cloud());
    PipelineConfig config = fast_config();
    MockBackend backend(
        {{"semantic", std::nullopt, std::nullopt, R"([{"answer":"pot","confidence":85}])", 0},
         {"material", std::nullopt, 0, R"([{"material":"titanium","confidence":90}])", 0},
         {"material", std::nullopt, 1, "not json", 0},
         {"material", std::nullopt, 2, R"([{"material":"Wood","confidence":50}])", 0}});

    ModelResult result = run_model(cloud, backend, config);
    REQUIRE(result.assignments.size() == 3);
    CHECK(result.assignments[0].material == "unknown");
    CHECK(result.assignments[0].confidence == 0);
    CHECK(result.assignments[0].note.find("off-palette") != std::string::npos);
    CHECK(result.assignments[1].material == "unknown");
    CHECK(result.assignments[2].material == "Wood");

    int seg0_attempts = 0, seg1_attempts = 0;
    for (const auto& entry : backend.transcript()) {
        if (entry.stage == "material" && entry.segment == 0) {
            ++seg0_attempts;
        }
        if (entry.stage == "material" && entry.segment == 1) {
            ++seg1_attempts;
        }
    }
    CHECK(seg0_attempts == 2);  // off-palette retries once
    CHECK(seg1_attempts == 3);  // malformed retries to the attempt cap
}

TEST_CASE("pipeline: stage-1 backend failure marks the model failed") {
    SegmentedPointCloud cloud = normalize(three_slab_cloud());
    PipelineConfig config = fast_config();
    MockBackend backend(
        {{"semantic", std::nullopt, std::nullopt, R"([{"answer":"pot","confidence":85}])", 3}});
    ModelResult result = run_model(cloud, backend, config);
    CHECK(result.failed);
    CHECK(result.assignments.empty());
    CHECK(!result.failure_notes.empty());
}

TEST_CASE("pipeline: per-segment backend failure only fails that segment") {
    SegmentedPointCloud cloud = normalize(three_slab_cloud());
    PipelineConfig config = fast_config();
    auto rules = pot_rules();
    rules[2].fail_first = 3;  // segment 1 permanently fails
    MockBackend backend(rules);
    ModelResult result = run_model(cloud, backend, config);
    CHECK(!result.failed);
    REQUIRE(result.assignments.size() == 3);
    CHECK(result.assignments[0].material == "Metal");
    CHECK(result.assignments[1].material == "unknown");
    CHECK(result.assignments[1].note.find("backend failure") != std::string::npos);
    CHECK(result.assignments[2].material == "Rubber");
}

TEST_CASE("pipeline: stage 2 rejects clouds over the segment cap") {
    SegmentedPointCloud cloud = make_cloud({}, {});
    for (int s = 0; s < 11; ++s) {
        add_plane(cloud, 0.1 * s, -0.5, 0.5, -0.5, 0.5, 4, 4, s);
    }
    cloud = normalize(cloud);
    PipelineConfig config = fast_config();
    MockBackend backend(pot_rules());
    CHECK_THROWS_AS(stage2_materials(cloud, "pot", backend, config), InputError);
}

namespace {

void write_slab_file(const std::filesystem::path& path, int segments, double jitter) {
    std::string text;
    for (int s = 0; s < segments; ++s) {
        for (int i = 0; i < 6; ++i) {
            for (int j = 0; j < 6; ++j) {
                text += std::to_string(-0.5 + 0.2 * i + jitter) + " " +
                        std::to_string(-0.5 + 0.2 * j) + " " +
                        std::to_string(0.3 * s) + " " + std::to_string(s) + "\n";
            }
        }
    }
    write_text(path, text);
}

}  // namespace

TEST_CASE("pipeline: run_batch skips oversize models and isolates failures") {
    TempDir tmp;
    write_slab_file(tmp.file("alpha.xyzs"), 2, 0.00);
    write_slab_file(tmp.file("beta.xyzs"), 3, 0.01);
    write_slab_file(tmp.file("gamma.xyzs"), 12, 0.02);
    write_text(tmp.file("broken.xyzs"), "0 0 nan 1\n");

    PipelineConfig config = fast_config();
    config.view_select.camera_count = 3;
    MockBackend backend(
        {{"semantic", std::nullopt, std::nullopt, R"([{"answer":"widget","confidence":85}])", 0},
         {"material", std::nullopt, std::nullopt, R"([{"material":"Metal","confidence":80}])", 0}});

    BatchResult batch = run_batch({tmp.file("beta.xyzs"), tmp.file("gamma.xyzs"),
                                   tmp.file("alpha.xyzs"), tmp.file("broken.xyzs")},
                                  backend, config, 2);
    REQUIRE(batch.models.size() == 4);
    CHECK(batch.models[0].model_id == "alpha");
    CHECK(batch.models[1].model_id == "beta");
    CHECK(batch.models[2].model_id == "broken");
    CHECK(batch.models[3].model_id == "gamma");

    CHECK(batch.models[0].assignments.size() == 2);
    CHECK(batch.models[1].assignments.size() == 3);
    CHECK(batch.models[2].failed);
    CHECK(batch.models[3].skip_reason.has_value());
    CHECK(batch.models[3].skip_reason->find("exceeds max_segments") != std::string::npos);

    // Ledger equals the per-model sums.
    long queries = 0;
    for (const ModelResult& m : batch.models) {
        for (const CostRecord& c : m.costs) {
            queries += c.queries;
        }
    }
    CHECK(batch.ledger.total().queries == queries);
    CHECK(batch.ledger.semantic.queries == 2);
    CHECK(batch.ledger.material.queries == 5);
}

TEST_CASE("pipeline: batch reports are identical across parallelism levels") {
    TempDir tmp;
    std::vector<std::filesystem::path> files;
    for (int i = 0; i < 6; ++i) {
        auto path = tmp.file("model" + std::to_string(i) + ".xyzs");
        write_slab_file(path, 2 + i % 3, 0.01 * i);
        files.push_back(path);
    }
    PipelineConfig config = fast_config();
    config.view_select.camera_count = 3;

    auto run_once = [&](int parallelism) {
        MockBackend backend(
            {{"semantic", std::nullopt, std::nullopt, R"([{"answer":"widget","confidence":85}])", 0},
             {"material", std::nullopt, std::nullopt, R"([{"material":"Metal","confidence":80}])", 0}});
        BatchResult batch = run_batch(files, backend, config, parallelism);
        return report_to_json(batch, nlohmann::json::object()).dump(2);
    };

    std::string serial = run_once(1);
    CHECK(serial == run_once(4));
    CHECK(serial == run_once(8));
}

TEST_CASE("pipeline: thousand-model mock batch ledger adds up exactly") {
    TempDir tmp;
    std::vector<std::filesystem::path> files;
    for (int i = 0; i < 1000; ++i) {
        auto path = tmp.file("m" + std::to_string(i) + ".xyzs");
        write_slab_file(path, 2, 0.001 * (i % 17));
        files.push_back(path);
    }
    PipelineConfig config;
    config.render.width = 64;
    config.render.height = 64;
    config.semantic_views = 4;
    config.view_select.camera_count = 2;
    config.seed = 7;
    MockBackend backend(
        {{"semantic", std::nullopt, std::nullopt, R"([{"answer":"widget","confidence":85}])", 0},
         {"material", std::nullopt, std::nullopt, R"([{"material":"Metal","confidence":80}])", 0}});

    BatchResult batch = run_batch(files, backend, config, 8);
    REQUIRE(batch.models.size() == 1000);
    long queries = 0, tokens = 0;
    for (const ModelResult& m : batch.models) {
        CHECK(!m.failed);
        CHECK(m.assignments.size() == 2);
        for (const CostRecord& c : m.costs) {
            queries += c.queries;
            tokens += c.total_tokens();
        }
    }
    CHECK(batch.ledger.total().queries == queries);
    CHECK(batch.ledger.total().input_tokens + batch.ledger.total().output_tokens == tokens);
    CHECK(queries == 3000);  // 1 semantic + 2 material per model
}

TEST_CASE("pipeline: report json round-trips") {
    TempDir tmp;
    write_slab_file(tmp.file("alpha.xyzs"), 2, 0.0);
    PipelineConfig config = fast_config();
    config.view_select.camera_count = 3;
    MockBackend backend(
        {{"semantic", std::nullopt, std::nullopt, R"([{"answer":"widget","confidence":85}])", 0},
         {"material", std::nullopt, std::nullopt, R"([{"material":"Metal","confidence":80}])", 0}});
    BatchResult batch = run_batch({tmp.file("alpha.xyzs")}, backend, config, 1);

    nlohmann::json doc = report_to_json(batch, {{"hello", "world"}});
    ParsedReport parsed = parse_report(doc);
    CHECK(parsed.config_echo["hello"] == "world");
    REQUIRE(parsed.batch.models.size() == 1);
    const ModelResult& m = parsed.batch.models[0];
    CHECK(m.model_id == "alpha");
    CHECK(m.confident());
    CHECK(m.assignments.size() == 2);
    CHECK(m.assignments[0].material == "Metal");
    CHECK(m.assignments[0].best_view_score.combined ==
          batch.models[0].assignments[0].best_view_score.combined);
    CHECK(parsed.batch.ledger.semantic.queries == batch.ledger.semantic.queries);

    CHECK_THROWS_AS(parse_report(nlohmann::json::object()), SchemaError);
}
