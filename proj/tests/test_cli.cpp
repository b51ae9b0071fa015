#include "doctest.h"

#include <fstream>

#include "geomat/cli.hpp"
#include "geomat/report.hpp"
#include "testutil.hpp"

using namespace geomat;
using namespace geomat::cli;
using namespace testutil;
using nlohmann::json;

namespace {

int run(std::vector<std::string> args) {
    std::vector<const char*> argv = {"geomat"};
    for (const std::string& a : args) {
        argv.push_back(a.c_str());
    }
    return run_main(int(argv.size()), argv.data());
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::filesystem::path data_dir() { return std::filesystem::path(GEOMAT_DATA_DIR); }

}  // namespace

TEST_CASE("cli: config overlay and unknown-key rejection") {
    CliConfig base;
    json doc = {
        {"pipeline",
         {{"semantic_threshold", 60},
          {"materials", {"Metal", "Glass"}},
          {"ablation", {{"skip_semantics", true}}},
          {"seed", 9}}},
        {"render", {{"width", 256}}},
        {"backend", {{"kind", "mock"}, {"mock_script", "m.json"}}},
        {"parallelism", 3},
    };
    CliConfig cfg = config_from_json(doc, base);
    CHECK(cfg.pipeline.semantic_threshold == 60);
    CHECK(cfg.pipeline.palette.materials == std::vector<std::string>{"Metal", "Glass"});
    CHECK(cfg.pipeline.ablation.skip_semantics);
    CHECK(cfg.pipeline.seed == 9);
    CHECK(cfg.pipeline.render.width == 256);
    CHECK(cfg.pipeline.render.height == 512);  // untouched default
    CHECK(cfg.backend.kind == "mock");
    CHECK(cfg.parallelism == 3);

    CHECK_THROWS_AS(config_from_json({{"pipelines", json::object()}}, base), InputError);
    CHECK_THROWS_AS(config_from_json({{"pipeline", {{"typo", 1}}}}, base), InputError);
    CHECK_THROWS_AS(config_from_json({{"backend", {{"kind", "other"}}}}, base), InputError);
}

TEST_CASE("cli: the config echo excludes execution knobs") {
    CliConfig cfg;
    cfg.output_dir = "somewhere";
    cfg.parallelism = 7;
    std::string echo = config_echo_json(cfg).dump();
    CHECK(echo.find("output_dir") == std::string::npos);
    CHECK(echo.find("parallelism") == std::string::npos);
    CHECK(echo.find("semantic_views") != std::string::npos);
}

TEST_CASE("cli: glob expansion") {
    TempDir tmp;
    write_text(tmp.file("a.xyzs"), "0 0 0 0\n");
    write_text(tmp.file("b.xyzs"), "0 0 0 0\n");
    write_text(tmp.file("c.ply"), "ply\n");

    auto matches = expand_globs({(tmp.path() / "*.xyzs").string()});
    REQUIRE(matches.size() == 2);
    CHECK(matches[0].filename() == "a.xyzs");
    CHECK(matches[1].filename() == "b.xyzs");

    auto mixed = expand_globs({(tmp.path() / "*.xyzs").string(),
                               (tmp.path() / "a.xyzs").string(),
                               (tmp.path() / "c.ply").string()});
    CHECK(mixed.size() == 3);  // deduped

    CHECK_THROWS_WITH_AS(expand_globs({(tmp.path() / "missing.xyzs").string()}),
                         doctest::Contains("missing.xyzs"), InputError);
    CHECK_THROWS_AS(expand_globs({(tmp.path() / "*.nope").string()}), InputError);
}

TEST_CASE("cli: render writes the stage-1 views") {
    TempDir tmp;
    auto out = tmp.file("render_out");
    int rc = run({"render", (data_dir() / "shapes" / "pot.xyzs").string(), "-o",
                  out.string(), "--width", "96", "--height", "96"});
    REQUIRE(rc == 0);
    for (int i = 0; i < 8; ++i) {
        CHECK(std::filesystem::exists(out / ("view" + std::to_string(i) + "_raster.png")));
        CHECK(std::filesystem::exists(out / ("view" + std::to_string(i) + "_depth.png")));
    }
}

TEST_CASE("cli: render --segment writes candidates and the score table") {
    TempDir tmp;
    auto out = tmp.file("seg_out");
    int rc = run({"render", (data_dir() / "shapes" / "pot.xyzs").string(), "--segment", "1",
                  "-o", out.string(), "--width", "96", "--height", "96", "--cameras", "10",
                  "--seed", "7"});
    REQUIRE(rc == 0);
    for (int i = 0; i < 10; ++i) {
        CHECK(std::filesystem::exists(out / ("candidate" + std::to_string(i) + ".png")));
    }
    CHECK(std::filesystem::exists(out / "scores.csv"));
    CHECK(std::filesystem::exists(out / "best.png"));
    std::string csv = slurp(out / "scores.csv");
    CHECK(csv.rfind("camera_index,E,D,V,S,discarded\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
}

TEST_CASE("cli: missing inputs exit with code 2") {
    CHECK(run({"render", "does_not_exist.xyzs"}) == 2);
    CHECK(run({"infer", "does_not_exist.xyzs", "--backend", "mock", "--mock-script",
               (data_dir() / "mock" / "pot_pipeline.json").string()}) == 2);
    CHECK(run({"infer"}) == 2);  // no dataset at all
    TempDir tmp;
    CHECK(run({"infer", (data_dir() / "shapes" / "pot.xyzs").string(), "--backend", "mock",
               "-o", tmp.file("x").string()}) == 2);  // mock without a script
}

TEST_CASE("cli: infer produces a deterministic report over the mock backend") {
    TempDir tmp;
    auto out1 = tmp.file("run1");
    auto out2 = tmp.file("run2");
    std::vector<std::string> common = {
        "infer", (data_dir() / "shapes" / "pot.xyzs").string(),
        "--backend", "mock",
        "--mock-script", (data_dir() / "mock" / "pot_pipeline.json").string(),
        "--width", "96", "--height", "96", "--cameras", "6", "--seed", "11"};

    std::vector<std::string> first = common;
    first.insert(first.end(), {"-o", out1.string(), "--parallelism", "1"});
    REQUIRE(run(first) == 0);

    std::vector<std::string> second = common;
    second.insert(second.end(), {"-o", out2.string(), "--parallelism", "4"});
    REQUIRE(run(second) == 0);

    std::string r1 = slurp(out1 / "report.json");
    std::string r2 = slurp(out2 / "report.json");
    CHECK(r1 == r2);

    json doc = json::parse(r1);
    ParsedReport report = parse_report(doc);
    REQUIRE(report.batch.models.size() == 1);
    const ModelResult& pot = report.batch.models[0];
    CHECK(pot.model_id == "pot");
    CHECK(pot.confident());
    REQUIRE(pot.assignments.size() == 3);
    CHECK(pot.assignments[0].material == "Metal");
    CHECK(pot.assignments[1].material == "Plastic");
    CHECK(pot.assignments[2].material == "Rubber");
    CHECK(pot.stage1_depth_paths.size() == 8);
    for (const std::string& rel : pot.stage1_depth_paths) {
        CHECK(std::filesystem::exists(out1 / rel));
    }
    for (const std::string& rel : pot.segment_image_paths) {
        CHECK(std::filesystem::exists(out1 / rel));
    }
}

TEST_CASE("cli: ablation flags reach the report echo") {
    TempDir tmp;
    auto out = tmp.file("ablation");
    int rc = run({"infer", (data_dir() / "shapes" / "pot.xyzs").string(), "--backend",
                  "mock", "--mock-script",
                  (data_dir() / "mock" / "pot_pipeline.json").string(), "--no-semantics",
                  "--materials", "Metal,Glass,Porcelain", "--eps-s", "55", "-o",
                  out.string(), "--width", "96", "--height", "96", "--cameras", "4"});
    REQUIRE(rc == 0);
    json doc = json::parse(slurp(out / "report.json"));
    CHECK(doc["config"]["pipeline"]["ablation"]["skip_semantics"] == true);
    CHECK(doc["config"]["pipeline"]["semantic_threshold"] == 55);
    CHECK(doc["config"]["pipeline"]["materials"] ==
          json::array({"Metal", "Glass", "Porcelain"}));
    // With skip_semantics the pot script's material entries still answer, but
    // off-palette replies (Plastic/Rubber) collapse to unknown.
    ParsedReport report = parse_report(doc);
    CHECK(report.batch.models[0].assignments[0].material == "Metal");
}

TEST_CASE("cli: config file values lose to explicit flags") {
    TempDir tmp;
    auto cfg_path = write_text(tmp.file("config.json"), R"({
        "pipeline": {"semantic_threshold": 60, "seed": 5},
        "render": {"width": 96, "height": 96},
        "backend": {"kind": "mock", "mock_script": ")" +
        (data_dir() / "mock" / "pot_pipeline.json").generic_string() + R"("},
        "dataset": [")" + (data_dir() / "shapes" / "pot.xyzs").generic_string() + R"("]
    })");
    auto out = tmp.file("out");
    int rc = run({"infer", "--config", cfg_path.string(), "--eps-s", "80", "-o",
                  out.string(), "--cameras", "4"});
    REQUIRE(rc == 0);
    json doc = json::parse(slurp(out / "report.json"));
    CHECK(doc["config"]["pipeline"]["semantic_threshold"] == 80);
    CHECK(doc["config"]["pipeline"]["seed"] == 5);
}

TEST_CASE("cli: evaluate prints metrics and writes evaluation artifacts") {
    TempDir tmp;
    auto out = tmp.file("out");
    REQUIRE(run({"infer", (data_dir() / "shapes" / "pot.xyzs").string(), "--backend",
                 "mock", "--mock-script",
                 (data_dir() / "mock" / "pot_pipeline.json").string(), "-o", out.string(),
                 "--width", "96", "--height", "96", "--cameras", "6"}) == 0);

    auto eval_out = tmp.file("eval");
    int rc = run({"evaluate", (out / "report.json").string(), "--judge-backend", "mock",
                  "--judge-mock-script", (data_dir() / "mock" / "pot_judges.json").string(),
                  "-o", eval_out.string(), "--cost-csv", (eval_out / "costs.csv").string()});
    REQUIRE(rc == 0);

    json doc = json::parse(slurp(eval_out / "evaluation.json"));
    CHECK(doc["metrics"]["M_c"] == 100.0);
    CHECK(doc["metrics"]["S_a"] == 100.0);
    CHECK(doc["metrics"]["M_a"] == 100.0);
    CHECK(doc["metrics"]["sigma_a"] == 100.0);
    CHECK(doc["verdicts"].size() == 4);  // 1 semantic + 3 material

    std::string csv = slurp(eval_out / "costs.csv");
    CHECK(csv.rfind("stage,Q,t,tau\n", 0) == 0);
    CHECK(csv.find("judge,") != std::string::npos);
}

TEST_CASE("cli: schema problems exit with code 3") {
    TempDir tmp;
    auto bad = write_text(tmp.file("report.json"), "{ not json");
    CHECK(run({"evaluate", bad.string(), "--judge-backend", "mock", "--judge-mock-script",
               (data_dir() / "mock" / "pot_judges.json").string()}) == 3);
    auto wrong = write_text(tmp.file("wrong.json"), R"({"models": 7})");
    CHECK(run({"evaluate", wrong.string(), "--judge-backend", "mock",
               "--judge-mock-script",
               (data_dir() / "mock" / "pot_judges.json").string()}) == 3);
}

TEST_CASE("cli: live backends refuse to start without credentials") {
    const char* saved = std::getenv("GEOMAT_API_KEY");
    std::string backup = saved ? saved : "";
    ::unsetenv("GEOMAT_API_KEY");

    TempDir tmp;
    CHECK(run({"infer", (data_dir() / "shapes" / "pot.xyzs").string(), "--backend", "live",
               "-o", tmp.file("x").string()}) == 2);

    auto out = tmp.file("out");
    REQUIRE(run({"infer", (data_dir() / "shapes" / "pot.xyzs").string(), "--backend",
                 "mock", "--mock-script",
                 (data_dir() / "mock" / "pot_pipeline.json").string(), "-o", out.string(),
                 "--width", "96", "--height", "96", "--cameras", "4"}) == 0);
    CHECK(run({"evaluate", (out / "report.json").string(), "--judge-backend", "live"}) == 2);

    if (saved) {
        ::setenv("GEOMAT_API_KEY", backup.c_str(), 1);
    }
}

TEST_CASE("cli: ply input flows through the pipeline") {
    TempDir tmp;
    auto out = tmp.file("mug");
    int rc = run({"infer", (data_dir() / "shapes" / "mug.ply").string(), "--backend",
                  "mock", "--mock-script",
                  (data_dir() / "mock" / "batch.json").string(), "-o", out.string(),
                  "--width", "96", "--height", "96", "--cameras", "6"});
    REQUIRE(rc == 0);
    ParsedReport report = parse_report(json::parse(slurp(out / "report.json")));
    REQUIRE(report.batch.models.size() == 1);
    CHECK(report.batch.models[0].model_id == "mug");
    CHECK(report.batch.models[0].assignments.size() == 2);
}
