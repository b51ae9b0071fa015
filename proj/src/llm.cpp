#include "geomat/llm.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <mutex>
#include <thread>

#include "json.hpp"

#ifdef GEOMAT_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

namespace geomat {
namespace {

using nlohmann::json;

std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });
    return s;
}

bool ci_equal(const std::string& a, const std::string& b) {
    return to_lower(a) == to_lower(b);
}

long token_estimate(std::size_t bytes) {
    return long((bytes + 3) / 4);
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return "";
    }
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// Models often wrap the JSON payload in a ``` fence; strictness applies to
// the payload itself.
std::string strip_code_fences(const std::string& text) {
    std::string s = trim(text);
    if (s.rfind("```", 0) == 0) {
        std::size_t nl = s.find('\n');
        if (nl == std::string::npos) {
            return "";
        }
        s = s.substr(nl + 1);
        std::size_t close = s.rfind("```");
        if (close != std::string::npos) {
            s = s.substr(0, close);
        }
        s = trim(s);
    }
    return s;
}

std::optional<json> parse_single_object_array(const std::string& text) {
    json j = json::parse(strip_code_fences(text), nullptr, false);
    if (j.is_discarded() || !j.is_array() || j.size() != 1 || !j[0].is_object()) {
        return std::nullopt;
    }
    return j[0];
}

std::optional<int> read_confidence(const json& obj) {
    auto it = obj.find("confidence");
    if (it == obj.end() || !it->is_number_integer()) {
        return std::nullopt;
    }
    long long v = it->get<long long>();
    if (v < 0 || v > 100) {
        return std::nullopt;
    }
    return int(v);
}

}  // namespace

// ---- palette -----------------------------------------------------------

MaterialPalette MaterialPalette::defaults() {
    return {{"Metal", "Wood", "Stone", "Glass", "Ceramic", "Plastic", "Rubber",
             "Foam", "Fabric", "Paper"}};
}

void MaterialPalette::validate() const {
    if (materials.empty()) {
        throw InputError("material palette must contain at least one material");
    }
    for (std::size_t i = 0; i < materials.size(); ++i) {
        if (trim(materials[i]).empty()) {
            throw InputError("material palette entries must be nonempty");
        }
        if (ci_equal(materials[i], "unknown")) {
            throw InputError("\"unknown\" is implicit and must not be listed in the palette");
        }
        for (std::size_t j = i + 1; j < materials.size(); ++j) {
            if (ci_equal(materials[i], materials[j])) {
                throw InputError("duplicate material in palette: " + materials[j]);
            }
        }
    }
}

std::string MaterialPalette::joined() const {
    std::string out;
    for (std::size_t i = 0; i < materials.size(); ++i) {
        if (i > 0) {
            out += ", ";
        }
        out += materials[i];
    }
    return out;
}

bool MaterialPalette::contains_exact(const std::string& name) const {
    return std::find(materials.begin(), materials.end(), name) != materials.end();
}

// ---- enum helpers -------------------------------------------------------

const char* to_string(SemanticStatus status) {
    switch (status) {
        case SemanticStatus::confident: return "confident";
        case SemanticStatus::low_confidence: return "low_confidence";
        case SemanticStatus::unknown: return "unknown";
        case SemanticStatus::parse_failure: return "parse_failure";
    }
    return "parse_failure";
}

std::optional<SemanticStatus> semantic_status_from_string(const std::string& s) {
    if (s == "confident") return SemanticStatus::confident;
    if (s == "low_confidence") return SemanticStatus::low_confidence;
    if (s == "unknown") return SemanticStatus::unknown;
    if (s == "parse_failure") return SemanticStatus::parse_failure;
    return std::nullopt;
}

const char* to_string(CostStage stage) {
    switch (stage) {
        case CostStage::semantic: return "semantic";
        case CostStage::material: return "material";
        case CostStage::judge: return "judge";
    }
    return "semantic";
}

CostRecord& CostRecord::merge(const CostRecord& other) {
    queries += other.queries;
    wall_seconds += other.wall_seconds;
    input_tokens += other.input_tokens;
    output_tokens += other.output_tokens;
    return *this;
}

// ---- prompts ------------------------------------------------------------

std::string build_semantic_prompt() { return build_semantic_prompt(SemanticPromptLayout{}); }

std::string build_semantic_prompt(const SemanticPromptLayout& layout) {
    if (layout.depth_views < 0 || layout.raster_views < 0 ||
        layout.depth_views + layout.raster_views == 0) {
        throw InputError("semantic prompt needs at least one image");
    }
    if (layout.depth_views > 0 && layout.raster_views > 0 &&
        layout.depth_views != layout.raster_views) {
        throw InputError("depth and raster view counts must match");
    }
    int viewpoints = std::max(layout.depth_views, layout.raster_views);
    std::string placement;
    switch (viewpoints) {
        case 4: placement = "4 alternating corners of a cube"; break;
        case 8: placement = "the 8 corners of a cube"; break;
        case 12: placement = "the 8 corners and 4 face centers of a cube"; break;
        default: throw InputError("semantic view count must be 4, 8, or 12");
    }

    int total = layout.depth_views + layout.raster_views;
    std::string s;
    s += "You are an object detector. You will receive " + std::to_string(total) +
         " renderings of the same CAD model:\n";
    if (layout.depth_views > 0) {
        s += "  - " + std::to_string(layout.depth_views) +
             " depth maps (grayscale depth; no color/texture).\n";
    }
    if (layout.raster_views > 0) {
        s += "  - " + std::to_string(layout.raster_views) + " point-cloud projections.\n";
    }
    s += "\nCamera is placed at " + placement +
         " around the object. So from each viewpoint you have ";
    if (layout.depth_views > 0 && layout.raster_views > 0) {
        s += "two images: one depth and one rendered point clouds.\n";
    } else if (layout.depth_views > 0) {
        s += "one image: a depth map.\n";
    } else {
        s += "one image: a rendered point cloud.\n";
    }
    s +=
        "\n"
        "Task:\n"
        "- Output one candidate class label for the object that best describes it.\n"
        "- Output a confidence score as an integer 0-100.\n"
        "- If uncertain, you may output \"unknown\" (confidence <= 30).\n"
        "\n"
        "Labeling Guidelines:\n"
        "- Try to be rotation- and scale-invariant. Do not infer \"front/back/top/bottom\" "
        "from pose.\n"
        "- Base your judgment only on geometry. Ignore color entirely.\n"
        "- If the geometry is featureless, low-detail, or highly ambiguous, reduce "
        "confidence accordingly; use \"unknown\" when appropriate.\n"
        "- Keep it to 1-2 words.\n"
        "\n"
        "Confidence Calibration:\n"
        "- 80-100: Distinctive geometry, minimal ambiguity, very confident.\n"
        "- 55-79: Reasonable match with some uncertainty but still detectable.\n"
        "- 31-54: Vague cues; object likely but not certain, unsure.\n"
        "- <=30: Insufficient/ambiguous; consider \"unknown\".\n"
        "\n"
        "OUTPUT (STRICT):\n"
        "Return ONLY valid JSON matching this exact shape and length:\n"
        "[\n"
        "    { \"answer\": \"label\", \"confidence\": 0 }\n"
        "]\n";
    return s;
}

std::string build_material_prompt(const std::string& object_type,
                                  const MaterialPalette& palette) {
    if (trim(object_type).empty()) {
        throw InputError("object type must be nonempty (use \"unknown\")");
    }
    palette.validate();
    std::string s;
    s +=
        "You are a materials and design engineering expert. You are given the CAD "
        "object name, list of available materials, and one rendered image from the "
        "CAD model.\n"
        "\n"
        "TASK:\n"
        "- Your need to assign the most appropriate material to the red-highlighted "
        "part of the given rendered image of the CAD model.\n"
        "\n"
        "RULES:\n"
        "1) Do not invent new materials; only select from the provided materials list.\n"
        "2) You need to choose a material that is commonsense for example power cord "
        "cannot be metal.\n"
        "3) If multiple options fit, break ties in this order: mechanical performance, "
        "environment/temperature/chemicals, manufacturability, cost/availability, "
        "mass/finish.\n"
        "4) If VERY uncertain, you can select \"unknown\".\n"
        "5) Consider only the red-highlighted region in the image.\n"
        "\n"
        "INFORMATION:\n";
    s += "- Object name is: " + object_type + ".\n";
    s += "- Available materials list (select one string exactly as written): " +
         palette.joined() + ".\n";
    s +=
        "\n"
        "OUTPUT (STRICT):\n"
        "Return ONLY this JSON with no extra text:\n"
        "[\n"
        "    {\"material\":\"from materials list\",\"confidence\": 0 }\n"
        "]\n";
    return s;
}

namespace {

std::string judge_output_block() {
    return
        "\n"
        "OUTPUT (STRICT):\n"
        "Return ONLY valid JSON matching this exact shape and length:\n"
        "[\n"
        "    { \"verdict\": \"correct\" }\n"
        "]\n"
        "where \"verdict\" is either \"correct\" or \"incorrect\".\n";
}

}  // namespace

std::string build_semantic_judge_prompt(const std::string& label,
                                        const SemanticPromptLayout& layout) {
    int total = layout.depth_views + layout.raster_views;
    std::string s;
    s += "You are an impartial evaluation judge for a 3D shape understanding system. "
         "You will receive " + std::to_string(total) +
         " renderings of the same CAD model (" + std::to_string(layout.depth_views) +
         " grayscale depth maps and " + std::to_string(layout.raster_views) +
         " point-cloud projections) together with a predicted object label.\n"
         "\n";
    s += "Predicted label: " + label + "\n";
    s +=
        "\n"
        "TASK:\n"
        "- Decide whether the predicted label plausibly names the object shown in the "
        "renderings.\n"
        "- Judge the label as a category; accept reasonable synonyms and supersets.\n";
    s += judge_output_block();
    return s;
}

std::string build_material_judge_prompt(const std::string& label,
                                        const MaterialPalette& palette,
                                        const std::string& material) {
    std::string s;
    s +=
        "You are an impartial evaluation judge for a material assignment system. You "
        "will receive one rendered image of a CAD model with one part highlighted in "
        "red, the object name, the list of candidate materials, and the material "
        "assigned to the highlighted part.\n"
        "\n"
        "INFORMATION:\n";
    s += "- Object name is: " + label + ".\n";
    s += "- Candidate materials list: " + palette.joined() + ".\n";
    s += "- Assigned material for the red-highlighted part: " + material + ".\n";
    s +=
        "\n"
        "TASK:\n"
        "- Decide whether the assigned material is plausible for the red-highlighted "
        "part of this object.\n";
    s += judge_output_block();
    return s;
}

// ---- parsing ------------------------------------------------------------

SemanticOutcome parse_semantic_response(const std::string& text, int semantic_threshold) {
    SemanticOutcome out;
    out.status = SemanticStatus::parse_failure;
    std::optional<json> obj = parse_single_object_array(text);
    if (!obj) {
        return out;
    }
    auto answer = obj->find("answer");
    if (answer == obj->end() || !answer->is_string()) {
        return out;
    }
    std::optional<int> conf = read_confidence(*obj);
    if (!conf) {
        return out;
    }
    std::string label = trim(answer->get<std::string>());
    if (label.empty()) {
        return out;
    }
    if (ci_equal(label, "unknown")) {
        out.label = "unknown";
        // Prompt calibration caps "unknown" at confidence 30.
        out.confidence = std::min(*conf, 30);
        out.status = SemanticStatus::unknown;
        return out;
    }
    out.label = label;
    out.confidence = *conf;
    out.status = *conf >= semantic_threshold ? SemanticStatus::confident
                                             : SemanticStatus::low_confidence;
    return out;
}

MaterialParse parse_material_response(const std::string& text,
                                      const MaterialPalette& palette) {
    MaterialParse out;
    std::optional<json> obj = parse_single_object_array(text);
    if (!obj) {
        return out;
    }
    auto material = obj->find("material");
    if (material == obj->end() || !material->is_string()) {
        return out;
    }
    std::optional<int> conf = read_confidence(*obj);
    if (!conf) {
        return out;
    }
    std::string name = trim(material->get<std::string>());
    out.confidence = *conf;
    if (ci_equal(name, "unknown")) {
        out.material = "unknown";
        out.result = MaterialParseResult::ok;
    } else if (palette.contains_exact(name)) {
        out.material = name;
        out.result = MaterialParseResult::ok;
    } else {
        out.material = name;
        out.result = MaterialParseResult::off_palette;
    }
    return out;
}

std::optional<bool> parse_judge_response(const std::string& text) {
    std::optional<json> obj = parse_single_object_array(text);
    if (!obj) {
        return std::nullopt;
    }
    auto verdict = obj->find("verdict");
    if (verdict == obj->end() || !verdict->is_string()) {
        return std::nullopt;
    }
    std::string v = to_lower(trim(verdict->get<std::string>()));
    if (v == "correct") {
        return true;
    }
    if (v == "incorrect") {
        return false;
    }
    return std::nullopt;
}

// ---- mock backend ---------------------------------------------------------

struct MockBackend::State {
    std::vector<Rule> rules;
    std::vector<int> remaining_failures;
    double latency = 0.0;
    std::optional<std::string> default_response;
    mutable std::mutex mu;
    std::vector<LoggedRequest> log;
};

MockBackend::MockBackend(std::vector<Rule> rules, double latency_seconds,
                         std::optional<std::string> default_response)
    : state_(std::make_shared<State>()) {
    state_->rules = std::move(rules);
    state_->remaining_failures.reserve(state_->rules.size());
    for (const Rule& r : state_->rules) {
        state_->remaining_failures.push_back(r.fail_first);
    }
    state_->latency = latency_seconds;
    state_->default_response = std::move(default_response);
}

MockBackend MockBackend::from_file(const std::filesystem::path& script) {
    std::ifstream in(script);
    if (!in) {
        throw InputError("cannot open mock script: " + script.string());
    }
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw SchemaError("mock script is not a JSON object: " + script.string());
    }
    auto response_text = [](const json& v) -> std::string {
        return v.is_string() ? v.get<std::string>() : v.dump();
    };
    std::vector<Rule> rules;
    if (doc.contains("responses")) {
        if (!doc["responses"].is_array()) {
            throw SchemaError("mock script: \"responses\" must be an array");
        }
        for (const json& e : doc["responses"]) {
            if (!e.is_object() || !e.contains("stage") || !e.contains("response")) {
                throw SchemaError("mock script: each response needs \"stage\" and \"response\"");
            }
            Rule r;
            r.stage = e["stage"].get<std::string>();
            if (e.contains("model")) {
                r.model = e["model"].get<std::string>();
            }
            if (e.contains("segment")) {
                r.segment = e["segment"].get<int>();
            }
            r.response_text = response_text(e["response"]);
            r.fail_first = e.value("fail_first", 0);
            rules.push_back(std::move(r));
        }
    }
    double latency = doc.value("latency_seconds", 0.0);
    std::optional<std::string> fallback;
    if (doc.contains("default_response")) {
        fallback = response_text(doc["default_response"]);
    }
    return MockBackend(std::move(rules), latency, std::move(fallback));
}

ChatResponse MockBackend::send(const ChatRequest& request) {
    std::lock_guard<std::mutex> lock(state_->mu);
    LoggedRequest entry;
    entry.stage = request.stage;
    entry.model_id = request.model_id;
    entry.segment = request.segment;
    entry.prompt = request.prompt;
    entry.image_count = request.images.size();
    for (const auto& img : request.images) {
        entry.image_bytes += img.size();
    }

    int best_index = -1;
    int best_score = -1;
    for (std::size_t i = 0; i < state_->rules.size(); ++i) {
        const Rule& r = state_->rules[i];
        if (r.stage != request.stage) {
            continue;
        }
        if (r.model && *r.model != request.model_id) {
            continue;
        }
        if (r.segment && *r.segment != request.segment) {
            continue;
        }
        int score = (r.model ? 2 : 0) + (r.segment ? 1 : 0);
        if (score > best_score) {
            best_score = score;
            best_index = int(i);
        }
    }

    std::string text;
    if (best_index >= 0) {
        if (state_->remaining_failures[std::size_t(best_index)] > 0) {
            --state_->remaining_failures[std::size_t(best_index)];
            entry.failed = true;
            state_->log.push_back(std::move(entry));
            throw BackendTransportError("scripted transport failure for stage=" +
                                        request.stage + " model=" + request.model_id);
        }
        text = state_->rules[std::size_t(best_index)].response_text;
    } else if (state_->default_response) {
        text = *state_->default_response;
    } else {
        entry.failed = true;
        state_->log.push_back(std::move(entry));
        throw BackendTransportError("no scripted response for stage=" + request.stage +
                                    " model=" + request.model_id +
                                    " segment=" + std::to_string(request.segment));
    }
    state_->log.push_back(std::move(entry));

    ChatResponse resp;
    resp.text = text;
    std::size_t input_bytes = request.prompt.size();
    for (const auto& img : request.images) {
        input_bytes += img.size();
    }
    resp.input_tokens = token_estimate(input_bytes);
    resp.output_tokens = token_estimate(text.size());
    resp.wall_seconds = state_->latency;
    return resp;
}

std::vector<MockBackend::LoggedRequest> MockBackend::transcript() const {
    std::lock_guard<std::mutex> lock(state_->mu);
    return state_->log;
}

// ---- live backend -----------------------------------------------------------

namespace {

class Gate {
public:
    explicit Gate(int slots) : slots_(slots < 1 ? 1 : slots) {}

    void acquire() {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [this] { return slots_ > 0; });
        --slots_;
    }
    void release() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            ++slots_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int slots_;
};

}  // namespace

struct LiveBackend::State {
    LiveBackendConfig config;
    std::string api_key;
    std::unique_ptr<Gate> gate;
};

LiveBackend::LiveBackend(LiveBackendConfig config) : state_(std::make_shared<State>()) {
    const char* key = std::getenv("GEOMAT_API_KEY");
    if (key == nullptr || key[0] == '\0') {
        throw InputError("live backend requires the GEOMAT_API_KEY environment variable");
    }
    if (const char* base = std::getenv("GEOMAT_API_BASE"); base != nullptr && base[0] != '\0') {
        config.base_url = base;
    }
    state_->api_key = key;
    state_->gate = std::make_unique<Gate>(config.max_in_flight);
    state_->config = std::move(config);
}

ChatResponse LiveBackend::send(const ChatRequest& request) {
    state_->gate->acquire();
    struct Release {
        Gate* g;
        ~Release() { g->release(); }
    } release{state_->gate.get()};

    auto start = std::chrono::steady_clock::now();

    json content = json::array();
    content.push_back({{"type", "text"}, {"text", request.prompt}});
    for (const auto& img : request.images) {
        content.push_back(
            {{"type", "image_url"},
             {"image_url",
              {{"url", "data:image/png;base64," + base64_encode(img.data(), img.size())}}}});
    }
    json body = {
        {"model", state_->config.model},
        {"temperature", state_->config.temperature},
        {"messages", json::array({{{"role", "user"}, {"content", content}}})},
    };

    httplib::Client client(state_->config.base_url);
    client.set_connection_timeout(int(state_->config.timeout_seconds), 0);
    client.set_read_timeout(int(state_->config.timeout_seconds), 0);
    client.set_default_headers({{"Authorization", "Bearer " + state_->api_key}});

    auto res = client.Post("/v1/chat/completions", body.dump(), "application/json");
    if (!res) {
        throw BackendTransportError("chat request failed: " +
                                    httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw BackendTransportError("chat request returned HTTP " +
                                    std::to_string(res->status) + ": " +
                                    res->body.substr(0, 200));
    }
    json doc = json::parse(res->body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("choices") || doc["choices"].empty()) {
        throw BackendTransportError("chat response is not a completion object");
    }
    const json& message = doc["choices"][0]["message"];
    if (!message.contains("content") || !message["content"].is_string()) {
        throw BackendTransportError("chat response has no text content");
    }

    ChatResponse resp;
    resp.text = message["content"].get<std::string>();
    std::size_t input_bytes = request.prompt.size();
    for (const auto& img : request.images) {
        input_bytes += img.size();
    }
    resp.input_tokens = token_estimate(input_bytes);
    resp.output_tokens = token_estimate(resp.text.size());
    if (doc.contains("usage") && doc["usage"].is_object()) {
        const json& usage = doc["usage"];
        resp.input_tokens = usage.value("prompt_tokens", resp.input_tokens);
        resp.output_tokens = usage.value("completion_tokens", resp.output_tokens);
    }
    resp.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return resp;
}

// ---- query engine -----------------------------------------------------------

QueryOutcome run_query(Backend& backend, const ChatRequest& request, CostStage stage,
                       const std::function<TextCheck(const std::string&)>& check,
                       const QueryOptions& options) {
    QueryOutcome outcome;
    outcome.cost.stage = stage;
    const int max_attempts = options.max_attempts < 1 ? 1 : options.max_attempts;
    bool off_palette_retried = false;
    std::string last_cause;

    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        if (attempt > 1 && options.backoff_base_seconds > 0.0) {
            double delay = options.backoff_base_seconds * double(1 << (attempt - 2));
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }
        ++outcome.cost.queries;
        ChatResponse resp;
        try {
            resp = backend.send(request);
        } catch (const BackendTransportError& err) {
            last_cause = err.what();
            if (attempt == max_attempts) {
                throw BackendError("backend failed after " + std::to_string(attempt) +
                                   " attempts: " + last_cause);
            }
            continue;
        }
        outcome.cost.wall_seconds += resp.wall_seconds;
        outcome.cost.input_tokens += resp.input_tokens;
        outcome.cost.output_tokens += resp.output_tokens;
        outcome.text = resp.text;
        outcome.final_check = check(resp.text);
        switch (outcome.final_check) {
            case TextCheck::accept:
                return outcome;
            case TextCheck::malformed:
                if (attempt == max_attempts) {
                    return outcome;
                }
                break;
            case TextCheck::off_palette:
                if (off_palette_retried || attempt == max_attempts) {
                    return outcome;
                }
                off_palette_retried = true;
                break;
        }
    }
    return outcome;  // unreachable; loop always returns or throws
}

std::pair<std::string, CostRecord> query(Backend& backend, const ChatRequest& request,
                                         CostStage stage, const QueryOptions& options) {
    QueryOutcome outcome = run_query(
        backend, request, stage, [](const std::string&) { return TextCheck::accept; },
        options);
    return {outcome.text, outcome.cost};
}

std::string base64_encode(const std::uint8_t* data, std::size_t size) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((size + 2) / 3 * 4);
    for (std::size_t i = 0; i < size; i += 3) {
        std::uint32_t chunk = std::uint32_t(data[i]) << 16;
        if (i + 1 < size) chunk |= std::uint32_t(data[i + 1]) << 8;
        if (i + 2 < size) chunk |= std::uint32_t(data[i + 2]);
        out.push_back(alphabet[(chunk >> 18) & 0x3f]);
        out.push_back(alphabet[(chunk >> 12) & 0x3f]);
        out.push_back(i + 1 < size ? alphabet[(chunk >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < size ? alphabet[chunk & 0x3f] : '=');
    }
    return out;
}

}  // namespace geomat
