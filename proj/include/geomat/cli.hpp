#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "geomat/pipeline.hpp"

namespace geomat::cli {

struct BackendSpec {
    std::string kind = "mock";  // "mock" | "live"
    std::string mock_script;
    std::string endpoint = "https://api.openai.com";
    std::string model = "gpt-4.1";
    int max_in_flight = 4;
    double retry_base_seconds = 0.5;  // live-backend backoff base
};

struct CliConfig {
    PipelineConfig pipeline;
    BackendSpec backend;
    BackendSpec judge_backend;
    std::vector<std::string> dataset;
    std::string output_dir = "out";
    int parallelism = 1;
};

// Overlays the JSON document onto `base`. Unknown keys are rejected so typos
// fail loudly. Throws InputError.
CliConfig config_from_json(const nlohmann::json& doc, const CliConfig& base);

// The effective configuration embedded in every report. Execution knobs that
// cannot change results (output_dir, parallelism) are deliberately excluded
// so reruns at different parallelism produce identical reports.
nlohmann::json config_echo_json(const CliConfig& config);

// Expands `*`/`?` patterns (filename component only), keeps literals, sorts
// and dedupes. A missing literal or a pattern with no matches throws
// InputError naming it.
std::vector<std::filesystem::path> expand_globs(const std::vector<std::string>& patterns);

// Full CLI: `geomat render|infer|evaluate ...`. Returns the process exit
// code: 0 ok, 2 input error, 3 schema error, 4 backend failure.
int run_main(int argc, const char* const* argv);

}  // namespace geomat::cli
