#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cgcnn/config.hpp"

namespace cgcnn {

struct CommandOutcome {
    std::string summary;  // one line for standard output
    std::vector<std::filesystem::path> artifacts;
};

// Runs one subcommand and writes its artifacts (plus manifest.json) under paths.out.
CommandOutcome run_command(const RunConfig& config);

// Grayscale texture images from a directory, sorted by filename.
std::vector<Tensor3> load_texture_directory(const std::filesystem::path& directory);

}  // namespace cgcnn
