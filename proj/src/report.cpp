#include "geomat/report.hpp"

namespace geomat {

using nlohmann::json;

namespace {

json vec3_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec3_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) {
        throw SchemaError("expected a 3-element array for a vector");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json assignment_to_json(const MaterialAssignment& a, const std::string& image_path) {
    json view = nullptr;
    if (a.camera_index >= 0) {
        view = {
            {"camera",
             {{"index", a.camera_index},
              {"position", vec3_to_json(a.best_view_camera.position)},
              {"target", vec3_to_json(a.best_view_camera.target)},
              {"up", vec3_to_json(a.best_view_camera.up)},
              {"fov_degrees", a.best_view_camera.fov_degrees}}},
            {"scores",
             {{"entropy", a.best_view_score.entropy},
              {"depth_spread", a.best_view_score.depth_spread},
              {"visibility", a.best_view_score.visibility},
              {"segment_pixels", a.best_view_score.segment_pixels},
              {"foreground_pixels", a.best_view_score.foreground_pixels},
              {"combined", a.best_view_score.combined}}},
        };
    }
    return {
        {"segment", a.segment},  {"material", a.material}, {"confidence", a.confidence},
        {"view", std::move(view)}, {"image", image_path},  {"note", a.note},
    };
}

MaterialAssignment assignment_from_json(const json& j, std::string& image_path) {
    MaterialAssignment a;
    a.segment = j.at("segment").get<int>();
    a.material = j.at("material").get<std::string>();
    a.confidence = j.at("confidence").get<int>();
    a.note = j.value("note", "");
    image_path = j.value("image", "");
    const json& view = j.at("view");
    if (!view.is_null()) {
        const json& camera = view.at("camera");
        a.camera_index = camera.at("index").get<int>();
        a.best_view_camera.position = vec3_from_json(camera.at("position"));
        a.best_view_camera.target = vec3_from_json(camera.at("target"));
        a.best_view_camera.up = vec3_from_json(camera.at("up"));
        a.best_view_camera.fov_degrees = camera.at("fov_degrees").get<double>();
        const json& scores = view.at("scores");
        a.best_view_score.entropy = scores.at("entropy").get<double>();
        a.best_view_score.depth_spread = scores.at("depth_spread").get<double>();
        a.best_view_score.visibility = scores.at("visibility").get<double>();
        a.best_view_score.segment_pixels = scores.at("segment_pixels").get<std::size_t>();
        a.best_view_score.foreground_pixels =
            scores.at("foreground_pixels").get<std::size_t>();
        a.best_view_score.combined = scores.at("combined").get<double>();
    }
    return a;
}

}  // namespace

json cost_record_to_json(const CostRecord& record) {
    return {
        {"stage", to_string(record.stage)},
        {"queries", record.queries},
        {"wall_seconds", record.wall_seconds},
        {"input_tokens", record.input_tokens},
        {"output_tokens", record.output_tokens},
    };
}

CostRecord cost_record_from_json(const json& j) {
    CostRecord r;
    std::string stage = j.at("stage").get<std::string>();
    if (stage == "semantic") {
        r.stage = CostStage::semantic;
    } else if (stage == "material") {
        r.stage = CostStage::material;
    } else if (stage == "judge") {
        r.stage = CostStage::judge;
    } else {
        throw SchemaError("unknown cost stage: " + stage);
    }
    r.queries = j.at("queries").get<long>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.input_tokens = j.at("input_tokens").get<long>();
    r.output_tokens = j.at("output_tokens").get<long>();
    return r;
}

json report_to_json(const BatchResult& batch, const json& config_echo) {
    json models = json::array();
    for (const ModelResult& m : batch.models) {
        json assignments = json::array();
        for (std::size_t i = 0; i < m.assignments.size(); ++i) {
            std::string image = i < m.segment_image_paths.size()
                                    ? m.segment_image_paths[i]
                                    : std::string{};
            assignments.push_back(assignment_to_json(m.assignments[i], image));
        }
        json costs = json::array();
        for (const CostRecord& c : m.costs) {
            costs.push_back(cost_record_to_json(c));
        }
        models.push_back({
            {"model_id", m.model_id},
            {"source_path", m.source_path},
            {"skipped", m.skip_reason.has_value()},
            {"skip_reason", m.skip_reason ? json(*m.skip_reason) : json(nullptr)},
            {"failed", m.failed},
            {"semantic",
             {{"label", m.semantic.label},
              {"confidence", m.semantic.confidence},
              {"status", to_string(m.semantic.status)}}},
            {"assignments", std::move(assignments)},
            {"images",
             {{"stage1_depth", m.stage1_depth_paths},
              {"stage1_raster", m.stage1_raster_paths}}},
            {"costs", std::move(costs)},
            {"notes", m.failure_notes},
        });
    }
    return {
        {"config", config_echo},
        {"models", std::move(models)},
        {"ledger",
         {{"semantic", cost_record_to_json(batch.ledger.semantic)},
          {"material", cost_record_to_json(batch.ledger.material)},
          {"judge", cost_record_to_json(batch.ledger.judge)},
          {"total", cost_record_to_json(batch.ledger.total())}}},
    };
}

ParsedReport parse_report(const json& doc) {
    try {
        ParsedReport out;
        out.config_echo = doc.at("config");
        for (const json& jm : doc.at("models")) {
            ModelResult m;
            m.model_id = jm.at("model_id").get<std::string>();
            m.source_path = jm.value("source_path", "");
            if (jm.at("skipped").get<bool>()) {
                m.skip_reason = jm.at("skip_reason").get<std::string>();
            }
            m.failed = jm.at("failed").get<bool>();
            const json& sem = jm.at("semantic");
            m.semantic.label = sem.at("label").get<std::string>();
            m.semantic.confidence = sem.at("confidence").get<int>();
            auto status = semantic_status_from_string(sem.at("status").get<std::string>());
            if (!status) {
                throw SchemaError("unknown semantic status in report");
            }
            m.semantic.status = *status;
            for (const json& ja : jm.at("assignments")) {
                std::string image;
                m.assignments.push_back(assignment_from_json(ja, image));
                m.segment_image_paths.push_back(std::move(image));
            }
            m.stage1_depth_paths =
                jm.at("images").at("stage1_depth").get<std::vector<std::string>>();
            m.stage1_raster_paths =
                jm.at("images").at("stage1_raster").get<std::vector<std::string>>();
            for (const json& jc : jm.at("costs")) {
                m.costs.push_back(cost_record_from_json(jc));
            }
            m.failure_notes = jm.at("notes").get<std::vector<std::string>>();
            out.batch.models.push_back(std::move(m));
        }
        const json& ledger = doc.at("ledger");
        out.batch.ledger.semantic = cost_record_from_json(ledger.at("semantic"));
        out.batch.ledger.material = cost_record_from_json(ledger.at("material"));
        out.batch.ledger.judge = cost_record_from_json(ledger.at("judge"));
        return out;
    } catch (const json::exception& err) {
        throw SchemaError(std::string("report does not match the expected schema: ") +
                          err.what());
    }
}

}  // namespace geomat
