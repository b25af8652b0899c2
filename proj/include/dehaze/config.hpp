#pragma once

#include "dehaze/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace dehaze {

// Configuration is a flat JSON object with dotted keys, e.g.
//   {"trainer.lr0": 2e-4, "model.backbone.profile": "tiny", "data.synthetic": 64}

/// Every key accepted by apply_config, sorted.
std::vector<std::string> config_keys();

/// Flat representation of every field of `cfg` (out_dir excluded).
nlohmann::json to_flat_json(const TrainConfig& cfg);
nlohmann::json to_flat_json(const ModelConfig& cfg);

/// Overrides fields from a flat object. "model.backbone.profile" is applied
/// first and resets the backbone to that profile's defaults. Throws
/// ConfigError on unknown keys or values of the wrong type. String values
/// are accepted for numeric and boolean keys (environment overrides).
void apply_config(TrainConfig& cfg, const nlohmann::json& flat);
void apply_config(ModelConfig& cfg, const nlohmann::json& flat);

/// Parses a flat JSON config file; nested objects are flattened with dots.
nlohmann::json read_config_file(const std::filesystem::path& path);

/// Flattens nested objects: {"a": {"b": 1}} becomes {"a.b": 1}.
nlohmann::json flatten(const nlohmann::json& object);

/// Values of DEHAZEKIT_<KEY> environment variables for every known key, where
/// <KEY> is the upper-cased key with dots replaced by underscores.
nlohmann::json environment_overrides(const char* prefix = "DEHAZEKIT_");

} // namespace dehaze
