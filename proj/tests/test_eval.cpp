#include "doctest.h"

#include <random>

#include "geomat/eval.hpp"
#include "testutil.hpp"

using namespace geomat;
using namespace testutil;

namespace {

ModelResult model(const std::string& id, SemanticStatus status, int segments,
                  const std::string& label = "pot") {
    ModelResult m;
    m.model_id = id;
    m.semantic.label = status == SemanticStatus::unknown ? "unknown" : label;
    m.semantic.confidence = status == SemanticStatus::confident ? 85 : 20;
    m.semantic.status = status;
    for (int s = 0; s < segments; ++s) {
        MaterialAssignment a;
        a.segment = s;
        a.material = "Metal";
        a.confidence = 80;
        a.camera_index = 0;
        m.assignments.push_back(a);
        m.segment_image_paths.push_back("img" + std::to_string(s) + ".png");
    }
    return m;
}

JudgeVerdict semantic_verdict(const std::string& id, bool correct) {
    JudgeVerdict v;
    v.kind = JudgeTargetKind::semantic;
    v.model_id = id;
    v.correct = correct;
    return v;
}

JudgeVerdict material_verdict(const std::string& id, int segment, bool correct) {
    JudgeVerdict v;
    v.kind = JudgeTargetKind::material;
    v.model_id = id;
    v.segment = segment;
    v.correct = correct;
    return v;
}

}  // namespace

TEST_CASE("eval: worked metrics example") {
    // Three confident two-segment models with verdicts [ok,ok], [ok,bad], [ok,ok].
    std::vector<ModelResult> models = {model("a", SemanticStatus::confident, 2),
                                       model("b", SemanticStatus::confident, 2),
                                       model("c", SemanticStatus::confident, 2)};
    std::vector<JudgeVerdict> verdicts = {
        semantic_verdict("a", true),     semantic_verdict("b", true),
        semantic_verdict("c", true),     material_verdict("a", 0, true),
        material_verdict("a", 1, true),  material_verdict("b", 0, true),
        material_verdict("b", 1, false), material_verdict("c", 0, true),
        material_verdict("c", 1, true)};

    MetricsSummary metrics = compute_metrics(models, verdicts);
    CHECK(metrics.model_confidence == 100.0);
    CHECK(*metrics.semantic_accuracy == 100.0);
    CHECK(*metrics.material_accuracy == doctest::Approx(200.0 / 3.0).epsilon(1e-12));
    CHECK(*metrics.mean_segment_accuracy == doctest::Approx(250.0 / 3.0).epsilon(1e-12));
    CHECK(*metrics.mean_segment_accuracy >= *metrics.material_accuracy);
    CHECK(metrics.counts.judged_models == 3);
    CHECK(metrics.counts.judged_segments == 6);
}

TEST_CASE("eval: model confidence and semantic accuracy ratios") {
    std::vector<ModelResult> models = {model("a", SemanticStatus::confident, 1),
                                       model("b", SemanticStatus::confident, 1),
                                       model("c", SemanticStatus::confident, 1),
                                       model("d", SemanticStatus::low_confidence, 0)};
    std::vector<JudgeVerdict> verdicts = {
        semantic_verdict("a", true),    semantic_verdict("b", true),
        semantic_verdict("c", false),   material_verdict("a", 0, true),
        material_verdict("b", 0, true), material_verdict("c", 0, true)};
    MetricsSummary metrics = compute_metrics(models, verdicts);
    CHECK(metrics.model_confidence == 75.0);
    CHECK(*metrics.semantic_accuracy == doctest::Approx(200.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("eval: skipped models leave the denominator") {
    std::vector<ModelResult> models = {model("a", SemanticStatus::confident, 1)};
    ModelResult skipped;
    skipped.model_id = "big";
    skipped.skip_reason = "segment count 12 exceeds max_segments 10";
    models.push_back(skipped);
    std::vector<JudgeVerdict> verdicts = {semantic_verdict("a", true),
                                          material_verdict("a", 0, true)};
    MetricsSummary metrics = compute_metrics(models, verdicts);
    CHECK(metrics.counts.total == 1);
    CHECK(metrics.model_confidence == 100.0);
}

TEST_CASE("eval: removing an unjudged model only changes the confidence denominator") {
    std::vector<ModelResult> models = {model("a", SemanticStatus::confident, 2),
                                       model("b", SemanticStatus::confident, 2),
                                       model("c", SemanticStatus::low_confidence, 0)};
    std::vector<JudgeVerdict> verdicts = {
        semantic_verdict("a", true),    semantic_verdict("b", false),
        material_verdict("a", 0, true), material_verdict("a", 1, false),
        material_verdict("b", 0, true), material_verdict("b", 1, true)};
    MetricsSummary with = compute_metrics(models, verdicts);
    models.pop_back();
    MetricsSummary without = compute_metrics(models, verdicts);
    CHECK(with.model_confidence != without.model_confidence);
    CHECK(*with.semantic_accuracy == *without.semantic_accuracy);
    CHECK(*with.material_accuracy == *without.material_accuracy);
    CHECK(*with.mean_segment_accuracy == *without.mean_segment_accuracy);
}

TEST_CASE("eval: metrics are permutation invariant") {
    std::vector<ModelResult> models = {model("a", SemanticStatus::confident, 2),
                                       model("b", SemanticStatus::confident, 3),
                                       model("c", SemanticStatus::unknown, 0)};
    std::vector<JudgeVerdict> verdicts = {
        semantic_verdict("a", true),     semantic_verdict("b", false),
        material_verdict("a", 0, true),  material_verdict("a", 1, false),
        material_verdict("b", 0, true),  material_verdict("b", 1, true),
        material_verdict("b", 2, false)};
    MetricsSummary base = compute_metrics(models, verdicts);

    std::swap(models[0], models[2]);
    std::reverse(verdicts.begin(), verdicts.end());
    MetricsSummary shuffled = compute_metrics(models, verdicts);
    CHECK(base.model_confidence == shuffled.model_confidence);
    CHECK(*base.semantic_accuracy == *shuffled.semantic_accuracy);
    CHECK(*base.material_accuracy == *shuffled.material_accuracy);
    CHECK(*base.mean_segment_accuracy == *shuffled.mean_segment_accuracy);
}

TEST_CASE("eval: degenerate metric inputs") {
    MetricsSummary empty = compute_metrics({}, {});
    CHECK(empty.model_confidence == 0.0);
    CHECK(!empty.semantic_accuracy.has_value());
    CHECK(!empty.material_accuracy.has_value());

    // No-semantics runs still measure M_a and sigma_a.
    std::vector<ModelResult> models = {model("a", SemanticStatus::unknown, 2)};
    std::vector<JudgeVerdict> verdicts = {material_verdict("a", 0, true),
                                          material_verdict("a", 1, true)};
    MetricsSummary metrics = compute_metrics(models, verdicts);
    CHECK(metrics.model_confidence == 0.0);
    CHECK(!metrics.semantic_accuracy.has_value());
    CHECK(*metrics.material_accuracy == 100.0);
}

TEST_CASE("eval: verdict consistency is enforced") {
    std::vector<ModelResult> models = {model("a", SemanticStatus::confident, 1)};
    CHECK_THROWS_AS(
        compute_metrics(models, {semantic_verdict("ghost", true)}), SchemaError);
    CHECK_THROWS_AS(
        compute_metrics(models, {semantic_verdict("a", true), material_verdict("a", 9, true)}),
        SchemaError);
    // Missing coverage: confident model without a semantic verdict.
    CHECK_THROWS_AS(compute_metrics(models, {material_verdict("a", 0, true)}), SchemaError);
    // Missing coverage: assignment without a material verdict.
    CHECK_THROWS_AS(compute_metrics(models, {semantic_verdict("a", true)}), SchemaError);
    // Duplicates.
    CHECK_THROWS_AS(compute_metrics(models, {semantic_verdict("a", true),
                                             semantic_verdict("a", true),
                                             material_verdict("a", 0, true)}),
                    SchemaError);
}

TEST_CASE("eval: metrics match an independent recomputation on random verdict sets") {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 1 + int(rng() % 20);
        std::vector<ModelResult> models;
        std::vector<JudgeVerdict> verdicts;
        long double total = 0, confident = 0, sem_correct = 0, judged = 0, all_ok = 0;
        long double frac_sum = 0;
        for (int i = 0; i < n; ++i) {
            std::string id = "m" + std::to_string(i);
            int pick = int(rng() % 4);
            if (pick == 3) {
                ModelResult skipped;
                skipped.model_id = id;
                skipped.skip_reason = "skipped";
                models.push_back(skipped);
                continue;
            }
            total += 1;
            SemanticStatus status = pick == 0   ? SemanticStatus::confident
                                    : pick == 1 ? SemanticStatus::low_confidence
                                                : SemanticStatus::unknown;
            int segments = status == SemanticStatus::confident ? 1 + int(rng() % 6) : 0;
            models.push_back(model(id, status, segments));
            if (status == SemanticStatus::confident) {
                confident += 1;
                bool sc = (rng() & 1) != 0;
                sem_correct += sc ? 1 : 0;
                verdicts.push_back(semantic_verdict(id, sc));
                judged += 1;
                int ok = 0;
                for (int s = 0; s < segments; ++s) {
                    bool mc = (rng() & 1) != 0;
                    ok += mc ? 1 : 0;
                    verdicts.push_back(material_verdict(id, s, mc));
                }
                all_ok += ok == segments ? 1 : 0;
                frac_sum += (long double)(ok) / segments;
            }
        }
        MetricsSummary metrics = compute_metrics(models, verdicts);
        if (total > 0) {
            CHECK(std::abs(metrics.model_confidence - double(100.0L * confident / total)) <
                  1e-9);
        }
        if (confident > 0) {
            CHECK(std::abs(*metrics.semantic_accuracy -
                           double(100.0L * sem_correct / confident)) < 1e-9);
            CHECK(std::abs(*metrics.material_accuracy - double(100.0L * all_ok / judged)) <
                  1e-9);
            CHECK(std::abs(*metrics.mean_segment_accuracy -
                           double(100.0L * frac_sum / judged)) < 1e-9);
            CHECK(*metrics.mean_segment_accuracy >= *metrics.material_accuracy - 1e-12);
        }
    }
}

TEST_CASE("eval: cost summary averages per stage and totals the averages") {
    std::vector<ModelResult> models(2);
    models[0].costs = {CostRecord{CostStage::semantic, 1, 1.0, 400, 40},
                       CostRecord{CostStage::material, 3, 3.0, 300, 30}};
    models[1].costs = {CostRecord{CostStage::semantic, 1, 2.0, 600, 60},
                       CostRecord{CostStage::material, 5, 1.0, 500, 50}};
    models[0].model_id = "a";
    models[1].model_id = "b";

    std::vector<CostRow> rows = cost_summary(models);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].stage == "semantic");
    CHECK(rows[0].queries == 1.0);
    CHECK(rows[0].wall_seconds == 1.5);
    CHECK(rows[0].tokens == 550.0);
    CHECK(rows[1].stage == "material");
    CHECK(rows[1].queries == 4.0);
    CHECK(rows[1].tokens == 440.0);
    CHECK(rows[2].stage == "total");
    CHECK(rows[2].queries == 5.0);
    CHECK(rows[2].tokens == 990.0);

    CostRecord judge{CostStage::judge, 8, 4.0, 800, 80};
    std::vector<CostRow> with_judge = cost_summary(models, &judge, 2);
    REQUIRE(with_judge.size() == 4);
    CHECK(with_judge[2].stage == "judge");
    CHECK(with_judge[2].queries == 4.0);
    CHECK(with_judge[3].queries == 9.0);

    std::vector<CostRow> empty = cost_summary({});
    CHECK(empty[0].queries == 0.0);
    CHECK(empty.back().tokens == 0.0);
}

namespace {

ImageLoader fake_loader() {
    return [](const std::string&) -> std::optional<std::vector<std::uint8_t>> {
        return std::vector<std::uint8_t>{1, 2, 3};
    };
}

std::vector<MockBackend::Rule> judge_rules(const std::string& semantic_verdict_text,
                                           const std::string& material_verdict_text) {
    return {
        {"judge_semantic", std::nullopt, std::nullopt, semantic_verdict_text, 0},
        {"judge_material", std::nullopt, std::nullopt, material_verdict_text, 0},
    };
}

}  // namespace

TEST_CASE("eval: judges parse, fall back conservatively, and track cost") {
    ModelResult m = model("pot", SemanticStatus::confident, 1);
    m.stage1_depth_paths.assign(8, "d.png");
    m.stage1_raster_paths.assign(8, "r.png");

    MockBackend good(judge_rules(R"([{"verdict":"correct"}])", R"([{"verdict":"incorrect"}])"));
    CostRecord cost{CostStage::judge};
    JudgeVerdict sv = judge_semantic(m, {std::vector<std::uint8_t>{1}}, {8, 8}, good, {}, &cost);
    CHECK(sv.correct);
    CHECK(sv.model_id == "pot");
    JudgeVerdict mv = judge_material(m.assignments[0], "pot", "pot",
                                     MaterialPalette::defaults(), {1, 2}, good, {}, &cost);
    CHECK(!mv.correct);
    CHECK(mv.segment == 0);
    CHECK(cost.queries == 2);

    MockBackend garbage({{"judge_semantic", std::nullopt, std::nullopt, "???", 0}});
    JudgeVerdict forced = judge_semantic(m, {}, {8, 8}, garbage, {}, nullptr);
    CHECK(!forced.correct);
    CHECK(forced.note.find("unparsable") != std::string::npos);

    MockBackend dead({{"judge_semantic", std::nullopt, std::nullopt, "x", 5}});
    JudgeVerdict failed = judge_semantic(m, {}, {8, 8}, dead, {}, nullptr);
    CHECK(!failed.correct);
    CHECK(failed.note.find("backend failure") != std::string::npos);
}

TEST_CASE("eval: evaluation harness produces full verdict coverage") {
    std::vector<ModelResult> models = {model("a", SemanticStatus::confident, 2),
                                       model("b", SemanticStatus::low_confidence, 0)};
    models[0].stage1_depth_paths.assign(8, "d.png");
    models[0].stage1_raster_paths.assign(8, "r.png");

    MockBackend judge(judge_rules(R"([{"verdict":"correct"}])", R"([{"verdict":"correct"}])"));
    EvaluationResult result = evaluate_models(models, MaterialPalette::defaults(), judge,
                                              fake_loader(), {});
    CHECK(result.verdicts.size() == 3);  // 1 semantic + 2 material
    CHECK(result.metrics.model_confidence == 50.0);
    CHECK(*result.metrics.semantic_accuracy == 100.0);
    CHECK(*result.metrics.material_accuracy == 100.0);
    CHECK(*result.metrics.mean_segment_accuracy == 100.0);
    CHECK(result.judge_cost.queries == 3);
    REQUIRE(result.cost_table.size() == 4);
    CHECK(result.cost_table[2].stage == "judge");
    CHECK(result.cost_table[2].queries == 3.0);

    // The judge prompt for materials carries the confirmed label.
    for (const auto& entry : judge.transcript()) {
        if (entry.stage == "judge_material") {
            CHECK(entry.prompt.find("Object name is: pot.") != std::string::npos);
        }
    }
}

TEST_CASE("eval: incorrect semantic verdicts replace the label with unknown") {
    std::vector<ModelResult> models = {model("a", SemanticStatus::confident, 2)};
    models[0].stage1_depth_paths.assign(8, "d.png");
    models[0].stage1_raster_paths.assign(8, "r.png");

    MockBackend judge(judge_rules(R"([{"verdict":"incorrect"}])", R"([{"verdict":"correct"}])"));
    EvaluationResult result = evaluate_models(models, MaterialPalette::defaults(), judge,
                                              fake_loader(), {});
    CHECK(*result.metrics.semantic_accuracy == 0.0);
    bool saw_material = false;
    for (const auto& entry : judge.transcript()) {
        if (entry.stage == "judge_material") {
            saw_material = true;
            CHECK(entry.prompt.find("Object name is: unknown.") != std::string::npos);
        }
    }
    CHECK(saw_material);
}

TEST_CASE("eval: missing best-view images are judged incorrect") {
    std::vector<ModelResult> models = {model("a", SemanticStatus::confident, 2)};
    models[0].stage1_depth_paths.assign(8, "d.png");
    models[0].stage1_raster_paths.assign(8, "r.png");
    models[0].segment_image_paths[1] = "";  // invisible segment: no image

    MockBackend judge(judge_rules(R"([{"verdict":"correct"}])", R"([{"verdict":"correct"}])"));
    EvaluationResult result = evaluate_models(models, MaterialPalette::defaults(), judge,
                                              fake_loader(), {});
    CHECK(*result.metrics.material_accuracy == 0.0);     // one segment forced incorrect
    CHECK(*result.metrics.mean_segment_accuracy == 50.0);
}

TEST_CASE("eval: evaluation results do not depend on parallelism") {
    std::vector<ModelResult> models;
    for (int i = 0; i < 6; ++i) {
        ModelResult m = model("m" + std::to_string(i), SemanticStatus::confident, 1 + i % 3);
        m.stage1_depth_paths.assign(8, "d.png");
        m.stage1_raster_paths.assign(8, "r.png");
        models.push_back(m);
    }
    auto run_once = [&](int parallelism) {
        MockBackend judge(
            judge_rules(R"([{"verdict":"correct"}])", R"([{"verdict":"incorrect"}])"));
        EvaluationOptions options;
        options.parallelism = parallelism;
        return evaluate_models(models, MaterialPalette::defaults(), judge, fake_loader(),
                               options);
    };
    EvaluationResult serial = run_once(1);
    EvaluationResult parallel = run_once(4);
    REQUIRE(serial.verdicts.size() == parallel.verdicts.size());
    for (std::size_t i = 0; i < serial.verdicts.size(); ++i) {
        CHECK(serial.verdicts[i].model_id == parallel.verdicts[i].model_id);
        CHECK(serial.verdicts[i].segment == parallel.verdicts[i].segment);
        CHECK(serial.verdicts[i].correct == parallel.verdicts[i].correct);
    }
    CHECK(serial.judge_cost.queries == parallel.judge_cost.queries);
}
