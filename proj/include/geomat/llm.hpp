#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "geomat/errors.hpp"
#include "geomat/viewselect.hpp"

namespace geomat {

// The closed candidate material list. "unknown" is always an implicit extra
// option and must not be listed explicitly.
struct MaterialPalette {
    std::vector<std::string> materials;

    static MaterialPalette defaults();

    void validate() const;                              // throws InputError
    std::string joined() const;                         // "Metal, Wood, ..."
    bool contains_exact(const std::string& name) const;
};

enum class SemanticStatus { confident, low_confidence, unknown, parse_failure };

const char* to_string(SemanticStatus status);
std::optional<SemanticStatus> semantic_status_from_string(const std::string& s);

struct SemanticOutcome {
    std::string label;
    int confidence = 0;
    SemanticStatus status = SemanticStatus::parse_failure;
};

struct MaterialAssignment {
    int segment = -1;
    std::string material = "unknown";
    int confidence = 0;
    ViewScore best_view_score;
    Camera best_view_camera;
    int camera_index = -1;  // -1: no candidate view was selectable
    std::string note;       // nonempty when the assignment fell back to "unknown"
};

enum class CostStage { semantic, material, judge };

const char* to_string(CostStage stage);

struct CostRecord {
    CostStage stage = CostStage::semantic;
    long queries = 0;  // attempts sent, including retries
    double wall_seconds = 0.0;
    long input_tokens = 0;
    long output_tokens = 0;

    long total_tokens() const { return input_tokens + output_tokens; }
    CostRecord& merge(const CostRecord& other);
};

// ---- prompts ---------------------------------------------------------

struct SemanticPromptLayout {
    int depth_views = 8;
    int raster_views = 8;
};

// The semantic-extraction prompt. The zero-argument form is the canonical
// 16-image version; the layout form adjusts the image-count sentences for
// reduced view counts and depth-/raster-only runs.
std::string build_semantic_prompt();
std::string build_semantic_prompt(const SemanticPromptLayout& layout);

std::string build_material_prompt(const std::string& object_type,
                                  const MaterialPalette& palette);

std::string build_semantic_judge_prompt(const std::string& label,
                                        const SemanticPromptLayout& layout = {});
std::string build_material_judge_prompt(const std::string& label,
                                        const MaterialPalette& palette,
                                        const std::string& material);

// ---- response parsing ------------------------------------------------

// Accepts the strict `[ { "answer": ..., "confidence": ... } ]` shape,
// tolerating a ```-fenced wrapper. Anything else comes back as
// parse_failure. Confidence at or above `semantic_threshold` with a label
// other than "unknown" is confident.
SemanticOutcome parse_semantic_response(const std::string& text, int semantic_threshold);

enum class MaterialParseResult { ok, off_palette, parse_failure };

struct MaterialParse {
    MaterialParseResult result = MaterialParseResult::parse_failure;
    std::string material;
    int confidence = 0;
};

MaterialParse parse_material_response(const std::string& text,
                                      const MaterialPalette& palette);

// true = correct, false = incorrect, nullopt = malformed.
std::optional<bool> parse_judge_response(const std::string& text);

// ---- backends --------------------------------------------------------

struct ChatRequest {
    std::string prompt;
    std::vector<std::vector<std::uint8_t>> images;  // PNG blobs, in order
    // Routing metadata: consumed by the mock backend and transcripts.
    std::string stage;  // "semantic" | "material" | "judge_semantic" | "judge_material"
    std::string model_id;
    int segment = -1;
};

struct ChatResponse {
    std::string text;
    long input_tokens = 0;
    long output_tokens = 0;
    double wall_seconds = 0.0;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual ChatResponse send(const ChatRequest& request) = 0;
    virtual const char* name() const = 0;
};

// Scripted backend keyed on (stage, model, segment). Token counts are the
// deterministic estimate ceil(bytes / 4); wall time is the scripted latency
// value (not a real sleep), so reports stay byte-stable.
class MockBackend : public Backend {
public:
    struct Rule {
        std::string stage;
        std::optional<std::string> model;
        std::optional<int> segment;
        std::string response_text;
        int fail_first = 0;  // transport failures before succeeding
    };

    struct LoggedRequest {
        std::string stage;
        std::string model_id;
        int segment = -1;
        std::string prompt;
        std::size_t image_count = 0;
        std::size_t image_bytes = 0;
        bool failed = false;
    };

    explicit MockBackend(std::vector<Rule> rules, double latency_seconds = 0.0,
                         std::optional<std::string> default_response = std::nullopt);
    static MockBackend from_file(const std::filesystem::path& script);

    ChatResponse send(const ChatRequest& request) override;
    const char* name() const override { return "mock"; }

    std::vector<LoggedRequest> transcript() const;

private:
    struct State;
    std::shared_ptr<State> state_;
};

struct LiveBackendConfig {
    std::string base_url = "https://api.openai.com";
    std::string model = "gpt-4.1";
    double temperature = 0.0;
    int max_in_flight = 4;
    double timeout_seconds = 120.0;
};

// JSON-over-HTTPS chat completion with base64 PNG attachments. The credential
// comes from GEOMAT_API_KEY; GEOMAT_API_BASE overrides the endpoint.
class LiveBackend : public Backend {
public:
    explicit LiveBackend(LiveBackendConfig config);

    ChatResponse send(const ChatRequest& request) override;
    const char* name() const override { return "live"; }

private:
    struct State;
    std::shared_ptr<State> state_;
};

// ---- query engine ----------------------------------------------------

struct QueryOptions {
    int max_attempts = 3;
    double backoff_base_seconds = 0.0;  // 0 disables sleeping
};

enum class TextCheck { accept, malformed, off_palette };

struct QueryOutcome {
    std::string text;
    TextCheck final_check = TextCheck::malformed;
    CostRecord cost;
};

// Sends the request, re-sending on transport errors and on responses the
// check rejects. Off-palette responses get exactly one retry before being
// surfaced. Exhausted transport retries raise BackendError with the last
// cause; exhausted validation retries return the last text unaccepted.
QueryOutcome run_query(Backend& backend, const ChatRequest& request, CostStage stage,
                       const std::function<TextCheck(const std::string&)>& check,
                       const QueryOptions& options = {});

// Transport retries only; any response text is accepted.
std::pair<std::string, CostRecord> query(Backend& backend, const ChatRequest& request,
                                         CostStage stage, const QueryOptions& options = {});

std::string base64_encode(const std::uint8_t* data, std::size_t size);

}  // namespace geomat
