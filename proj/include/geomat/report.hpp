#pragma once

#include "json.hpp"

#include "geomat/pipeline.hpp"

namespace geomat {

// Batch report document: {"config": <echo>, "models": [...], "ledger": {...}}.
// Serialization is deterministic: nlohmann::json orders keys, doubles use
// shortest round-trip formatting.
nlohmann::json report_to_json(const BatchResult& batch, const nlohmann::json& config_echo);

struct ParsedReport {
    nlohmann::json config_echo;
    BatchResult batch;
};

// Inverse of report_to_json; throws SchemaError on structural mismatch.
ParsedReport parse_report(const nlohmann::json& doc);

nlohmann::json cost_record_to_json(const CostRecord& record);
CostRecord cost_record_from_json(const nlohmann::json& j);

}  // namespace geomat
