#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgcnn/evaluation.hpp"
#include "cgcnn/nn.hpp"
#include "cgcnn/sampler.hpp"
#include "cgcnn/trainer.hpp"

namespace cgcnn {

enum class RunMode { Train, Utility, Texture, Hsi, Export };

std::string to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& name);  // accepts "export-weights" too

struct RunPaths {
    std::filesystem::path dataset;   // RGB training images
    std::filesystem::path holdout;   // RGB images for utility evaluation
    std::filesystem::path cube;      // HSI raw cube (header at <cube>.json)
    std::filesystem::path labels;    // HSI label raster
    std::filesystem::path textures;  // directory of grayscale texture images
    std::filesystem::path bank;      // bank to load
    std::filesystem::path out = "out";
};

struct RunConfig {
    RunMode mode = RunMode::Train;
    std::uint64_t seed = 0;
    RunPaths paths;
    SamplerConfig sampler;
    BankGeometry geometry{64, 11, 3, 4};
    TrainerConfig trainer;
    std::size_t checkpoint_every = 0;
    UtilityConfig utility;
    TextureConfig texture;
    HsiBenchConfig hsi;

    // Fully resolved configuration in file form; what manifest.json records.
    nlohmann::json resolved;
};

// Default configuration tree for a mode. HSI runs get the hyperspectral geometry
// (a=3, w=1, s=1, d=30, C=20, g=2); everything else the natural-image one.
nlohmann::json default_config(RunMode mode, bool hsi_sampler = false);

// Resolution order: defaults < config file < `overrides` ("dotted.key=value").
// Unknown keys, type mismatches and missing required paths raise ConfigError naming the key.
RunConfig parse_config(RunMode mode, const std::optional<std::filesystem::path>& file,
                       const std::vector<std::string>& overrides);

// Same as parse_config but from an already parsed tree (used by bindings and tests).
RunConfig resolve_config(RunMode mode, const nlohmann::json& user, const std::vector<std::string>& overrides);

}  // namespace cgcnn
