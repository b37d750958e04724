#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cgcnn/image_io.hpp"
#include "cgcnn/nn.hpp"
#include "cgcnn/tensor.hpp"

namespace cgcnn {

struct ImageStore {
    std::vector<Tensor3> images;  // H x W x 3, values in [0,1]
    std::vector<std::string> ids;
    std::size_t skipped = 0;      // undecodable files seen while loading

    std::size_t size() const { return images.size(); }
};

struct HsiCube {
    Tensor3 cube;  // H x W x bands
    LabelRaster labels;
    std::vector<std::string> class_names;
    std::size_t class_count = 0;

    std::size_t rows() const { return cube.rows(); }
    std::size_t cols() const { return cube.cols(); }
    std::size_t bands() const { return cube.channels(); }
};

enum class SamplerMode { Rgb, Hsi };

std::string to_string(SamplerMode mode);
SamplerMode sampler_mode_from_string(const std::string& name);

struct SamplerConfig {
    std::size_t classes = 100;        // C
    std::size_t per_class = 16;       // N
    std::size_t patch = 19;           // a
    std::size_t channels = 3;         // b
    std::size_t slide = 25;           // g
    double gray_probability = 0.5;
    double jitter_amplitude = 0.10;
    SamplerMode mode = SamplerMode::Rgb;

    void validate() const;
};

struct WindowOrigin {
    std::size_t image = 0;
    std::size_t row = 0;  // top-left corner
    std::size_t col = 0;

    friend bool operator==(const WindowOrigin&, const WindowOrigin&) = default;
};

struct TaskExample {
    Patch patch;
    std::size_t label = 0;  // class index in [0, C)
    std::size_t group = 0;  // contextual group the patch was cut from
    WindowOrigin origin;
};

struct TaskDataset {
    std::vector<TaskExample> examples;
    std::size_t classes = 0;
    std::size_t per_class = 0;

    std::size_t size() const { return examples.size(); }
    std::vector<LabeledPatchRef> refs() const;
    std::vector<std::size_t> labels() const;
};

// Every decodable PNG/JPEG in `directory`, sorted by filename.
ImageStore load_rgb_dataset(const std::filesystem::path& directory);

// Reads `<cube>.json` (width, height, bands, dtype "f32", interleave "bsq") and the raw
// little-endian cube, then the label raster. Bands are min-max normalized unless disabled.
HsiCube load_hsi(const std::filesystem::path& cube_path, const std::filesystem::path& labels_path,
                 bool normalize = true);

// Writes cube values as float32 plus sidecar header and label raster.
void write_hsi(const HsiCube& cube, const std::filesystem::path& cube_path,
               const std::filesystem::path& labels_path);

// Per-band min-max scaling to [0,1]; constant bands become 0.
void normalize_bands(Tensor3& cube);

// Number of distinct nonzero labels present in the raster.
std::size_t labeled_class_count(const LabelRaster& labels);

// Size of the slide lattice for radius g: (2g+1)^2.
std::size_t slide_lattice_size(std::size_t slide);

Patch crop(const Tensor3& image, std::size_t row, std::size_t col, std::size_t side);

TaskDataset build_task(const ImageStore& store, const SamplerConfig& config, Rng& rng);
TaskDataset build_task(const HsiCube& cube, const SamplerConfig& config, Rng& rng);

// Grayscale (BT.601 luma replicated) with probability gray_probability, otherwise
// per-channel multiplicative jitter clipped to [0,1].
Patch augment_patch(Patch x, const SamplerConfig& config, Rng& rng);

// Stratified split: round(N * e_fraction) per class go to the first set.
std::pair<TaskDataset, TaskDataset> split_em(const TaskDataset& task, double e_fraction, Rng& rng);

}  // namespace cgcnn
