#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "beamcast/airsim/scene.hpp"
#include "beamcast/beamnet/config.hpp"
#include "beamcast/harness/harness.hpp"

namespace beamcast::cli {

/// Everything a command needs, as read from a JSON config file. Missing keys
/// keep their defaults; unknown keys and wrongly typed values are ConfigErrors
/// naming the dotted field path.
struct RunConfig {
    std::uint64_t seed = 0; // dataset seed for gen-data, training seed otherwise
    std::uint64_t samples = 2000;
    airsim::SceneConfig scene;
    airsim::RadioConfig radio;
    beamnet::ModelConfig model;
    harness::TrainConfig train; // train.seed is taken from `seed`
    std::string data_dir;
    std::string out_dir;

    void validate() const;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const RunConfig& c);

// Sections, reused by the checkpoint format.
nlohmann::ordered_json to_json(const beamnet::ModelConfig& c);
nlohmann::ordered_json to_json(const harness::TrainConfig& c); // includes seed
beamnet::ModelConfig parse_model_config(const nlohmann::json& j, const std::string& path = "model");
harness::TrainConfig parse_train_config(const nlohmann::json& j, const std::string& path = "train");

} // namespace beamcast::cli
