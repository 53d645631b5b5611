#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"

#include "isac/dataset.hpp"

namespace isac {

/// Everything a config file can set. Missing keys keep their defaults;
/// unknown keys are rejected.
struct RunConfig {
    std::uint64_t seed = 0;
    ScenarioConfig scenario;         // also carries comm, radar and detect sections
    std::vector<SceneObject> objects;  // explicit scene for single-frame synthesis
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);

/// Throws ConfigError when the file is missing or malformed.
RunConfig load_config(const std::filesystem::path& path);

}  // namespace isac
