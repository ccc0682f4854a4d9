#pragma once

#include "cgt/model.hpp"

#include <json.hpp>

#include <filesystem>

namespace cgt {

// Checkpoint schema "cgt.checkpoint/1": model config, config hash and every
// named parameter (shape + row-major values). Doubles round-trip exactly.
nlohmann::json checkpoint_json(const Model& model, const nlohmann::json& extra = nlohmann::json::object());
Model model_from_checkpoint(const nlohmann::json& j);

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const nlohmann::json& extra = nlohmann::json::object());
Model load_checkpoint(const std::filesystem::path& path, nlohmann::json* extra = nullptr);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace cgt
