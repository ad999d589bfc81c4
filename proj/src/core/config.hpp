#pragma once

#include <filesystem>
#include <string>

#include "core/metrics.hpp"
#include "core/phantom.hpp"
#include "core/trainer.hpp"

namespace mrct {

// One versioned document that drives every command. Each section is optional
// in the file (defaults fill the gaps) but unknown keys anywhere are
// rejected, so typos fail loudly instead of silently using a default.
struct RunConfig {
    int version = 1;
    GenerateConfig data;
    TrainConfig train;
    EvalConfig eval;
};

// Model-specific defaults (objective terms and lambda differ per model).
RunConfig default_run_config(ModelKind model);

// Parses the JSON document (already materialized) with recursive
// unknown-key rejection; missing keys keep their defaults. Pure function.
RunConfig parse_run_config(const std::string& text, ModelKind default_model);
RunConfig load_run_config(const std::filesystem::path& path, ModelKind default_model);

// Canonical serialization of the whole document and its fingerprint; two
// runs with equal hashes and equal data are bit-identical.
std::string run_config_json(const RunConfig& cfg);
std::string run_config_hash(const RunConfig& cfg);

// Validates all sections without touching the filesystem.
void validate_run_config(const RunConfig& cfg);

} // namespace mrct
