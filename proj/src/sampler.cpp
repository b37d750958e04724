#include "cgcnn/sampler.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cgcnn/error.hpp"

namespace cgcnn {

namespace fs = std::filesystem;

std::string to_string(SamplerMode mode) { return mode == SamplerMode::Rgb ? "rgb" : "hsi"; }

SamplerMode sampler_mode_from_string(const std::string& name) {
    if (name == "rgb" || name == "RGB") return SamplerMode::Rgb;
    if (name == "hsi" || name == "HSI") return SamplerMode::Hsi;
    throw ConfigError("unknown sampler mode '" + name + "' (expected rgb or hsi)");
}

void SamplerConfig::validate() const {
    if (classes < 1) throw InvalidInput("sampler: C must be >= 1");
    if (per_class < 1) throw InvalidInput("sampler: N must be >= 1");
    if (patch < 1) throw InvalidInput("sampler: patch side must be >= 1");
    if (channels < 1) throw InvalidInput("sampler: channel count must be >= 1");
    if (!(gray_probability >= 0.0 && gray_probability <= 1.0)) {
        throw InvalidInput("sampler: gray_probability must lie in [0,1]");
    }
    if (!(jitter_amplitude >= 0.0)) throw InvalidInput("sampler: jitter_amplitude must be >= 0");
    if (mode == SamplerMode::Rgb && channels != 3) throw InvalidInput("sampler: RGB mode requires 3 channels");
}

std::vector<LabeledPatchRef> TaskDataset::refs() const {
    std::vector<LabeledPatchRef> out;
    out.reserve(examples.size());
    for (const auto& e : examples) out.push_back({&e.patch, e.label});
    return out;
}

std::vector<std::size_t> TaskDataset::labels() const {
    std::vector<std::size_t> out;
    out.reserve(examples.size());
    for (const auto& e : examples) out.push_back(e.label);
    return out;
}

namespace {

bool has_image_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

float read_f32_le(const unsigned char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return std::bit_cast<float>(bits);
}

fs::path header_path(const fs::path& cube_path) { return fs::path(cube_path.string() + ".json"); }

// Picks a seed position uniformly over every placement with full slide room.
struct SeedLattice {
    std::vector<const Tensor3*> sources;
    std::vector<std::size_t> cumulative;  // running count of valid seeds per source
    std::size_t span = 0;

    SeedLattice(std::vector<const Tensor3*> srcs, const SamplerConfig& config) : sources(std::move(srcs)) {
        span = config.patch + 2 * config.slide;
        std::size_t total = 0;
        for (const Tensor3* img : sources) {
            if (img->rows() >= span && img->cols() >= span) {
                total += (img->rows() - span + 1) * (img->cols() - span + 1);
            }
            cumulative.push_back(total);
        }
        if (total == 0) {
            std::ostringstream msg;
            msg << "no source can host a " << config.patch << "x" << config.patch << " window with +/-"
                << config.slide << " slide room (needs both sides >= " << span << " pixels; " << sources.size()
                << " source(s) checked)";
            throw InvalidInput(msg.str());
        }
    }

    WindowOrigin draw(Rng& rng, std::size_t slide) const {
        std::uniform_int_distribution<std::size_t> pick(0, cumulative.back() - 1);
        const std::size_t flat = pick(rng);
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), flat);
        const auto image = static_cast<std::size_t>(it - cumulative.begin());
        const std::size_t offset = flat - (image == 0 ? 0 : cumulative[image - 1]);
        const std::size_t width = sources[image]->cols() - span + 1;
        return {image, offset / width + slide, offset % width + slide};
    }
};

TaskDataset build_from_sources(std::vector<const Tensor3*> sources, const SamplerConfig& config, Rng& rng) {
    config.validate();
    for (const Tensor3* src : sources) {
        if (src->channels() != config.channels) {
            std::ostringstream msg;
            msg << "source has " << src->channels() << " channels but sampler is configured for "
                << config.channels;
            throw InvalidInput(msg.str());
        }
    }
    const SeedLattice lattice(std::move(sources), config);
    const auto g = static_cast<long long>(config.slide);
    std::uniform_int_distribution<long long> slide(-g, g);

    TaskDataset task;
    task.classes = config.classes;
    task.per_class = config.per_class;
    task.examples.reserve(config.classes * config.per_class);
    for (std::size_t c = 0; c < config.classes; ++c) {
        const WindowOrigin seed = lattice.draw(rng, config.slide);
        const Tensor3& image = *lattice.sources[seed.image];
        for (std::size_t n = 0; n < config.per_class; ++n) {
            WindowOrigin at = seed;
            if (n > 0) {
                const long long dr = slide(rng);
                const long long dc = slide(rng);
                at.row = static_cast<std::size_t>(static_cast<long long>(seed.row) + dr);
                at.col = static_cast<std::size_t>(static_cast<long long>(seed.col) + dc);
            }
            Patch patch = crop(image, at.row, at.col, config.patch);
            if (config.mode == SamplerMode::Rgb) patch = augment_patch(std::move(patch), config, rng);
            task.examples.push_back({std::move(patch), c, c, at});
        }
    }
    return task;
}

}  // namespace

ImageStore load_rgb_dataset(const fs::path& directory) {
    if (!fs::is_directory(directory)) throw IoError("dataset directory not found: " + directory.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(directory)) {
        if (entry.is_regular_file() && has_image_extension(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    if (files.empty()) throw IoError("no PNG/JPEG files in " + directory.string());

    ImageStore store;
    for (const auto& file : files) {
        Tensor3 image = try_read_rgb(file);
        if (image.size() == 0) {
            std::cerr << "warning: skipping undecodable image " << file.string() << "\n";
            ++store.skipped;
            continue;
        }
        store.images.push_back(std::move(image));
        store.ids.push_back(file.filename().string());
    }
    if (store.images.empty()) {
        throw IoError("none of the " + std::to_string(files.size()) + " image files in " + directory.string() +
                      " could be decoded");
    }
    return store;
}

void normalize_bands(Tensor3& cube) {
    const std::size_t pixels = cube.rows() * cube.cols();
    const std::size_t bands = cube.channels();
    auto& data = cube.data();
    for (std::size_t k = 0; k < bands; ++k) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < pixels; ++p) {
            lo = std::min(lo, data[p * bands + k]);
            hi = std::max(hi, data[p * bands + k]);
        }
        const double range = hi - lo;
        for (std::size_t p = 0; p < pixels; ++p) {
            double& v = data[p * bands + k];
            v = range > 0.0 ? (v - lo) / range : 0.0;
        }
    }
}

std::size_t labeled_class_count(const LabelRaster& labels) {
    std::set<std::uint16_t> seen;
    for (auto v : labels.values) {
        if (v != 0) seen.insert(v);
    }
    return seen.size();
}

HsiCube load_hsi(const fs::path& cube_path, const fs::path& labels_path, bool normalize) {
    const fs::path hdr = header_path(cube_path);
    std::ifstream hdr_in(hdr);
    if (!hdr_in) throw IoError("missing HSI header " + hdr.string());
    nlohmann::json header;
    try {
        hdr_in >> header;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed HSI header " + hdr.string() + ": " + e.what());
    }
    std::size_t width = 0, height = 0, bands = 0;
    try {
        width = header.at("width").get<std::size_t>();
        height = header.at("height").get<std::size_t>();
        bands = header.at("bands").get<std::size_t>();
        if (header.at("dtype").get<std::string>() != "f32") throw IoError("HSI dtype must be f32");
        if (header.at("interleave").get<std::string>() != "bsq") throw IoError("HSI interleave must be bsq");
    } catch (const nlohmann::json::exception& e) {
        throw IoError("HSI header " + hdr.string() + ": " + e.what());
    }

    std::ifstream in(cube_path, std::ios::binary);
    if (!in) throw IoError("cannot open HSI cube " + cube_path.string());
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t expected = width * height * bands * 4;
    if (raw.size() != expected) {
        std::ostringstream msg;
        msg << "HSI cube " << cube_path.string() << " has " << raw.size() << " bytes, header implies " << expected;
        throw IoError(msg.str());
    }

    HsiCube out;
    out.cube = Tensor3(height, width, bands);
    const std::size_t plane = width * height;
    for (std::size_t k = 0; k < bands; ++k) {
        for (std::size_t p = 0; p < plane; ++p) {
            const float v = read_f32_le(raw.data() + 4 * (k * plane + p));
            if (!std::isfinite(v)) throw IoError("HSI cube contains non-finite values");
            out.cube.data()[p * bands + k] = static_cast<double>(v);
        }
    }

    out.labels = read_label_raster(labels_path);
    if (out.labels.rows != height || out.labels.cols != width) {
        std::ostringstream msg;
        msg << "label raster is " << out.labels.rows << "x" << out.labels.cols << " but cube is " << height << "x"
            << width;
        throw IoError(msg.str());
    }
    if (header.contains("class_names")) out.class_names = header["class_names"].get<std::vector<std::string>>();
    const std::uint16_t max_label = out.labels.values.empty()
                                        ? 0
                                        : *std::max_element(out.labels.values.begin(), out.labels.values.end());
    out.class_count = std::max<std::size_t>(out.class_names.size(), max_label);
    if (normalize) normalize_bands(out.cube);
    return out;
}

void write_hsi(const HsiCube& cube, const fs::path& cube_path, const fs::path& labels_path) {
    nlohmann::json header = {{"width", cube.cols()},
                             {"height", cube.rows()},
                             {"bands", cube.bands()},
                             {"dtype", "f32"},
                             {"interleave", "bsq"}};
    if (!cube.class_names.empty()) header["class_names"] = cube.class_names;
    std::ofstream hdr(header_path(cube_path));
    if (!hdr) throw IoError("cannot write HSI header for " + cube_path.string());
    hdr << header.dump(2) << "\n";

    std::ofstream out(cube_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + cube_path.string());
    const std::size_t plane = cube.rows() * cube.cols();
    const std::size_t bands = cube.bands();
    std::vector<unsigned char> raw(plane * bands * 4);
    for (std::size_t k = 0; k < bands; ++k) {
        for (std::size_t p = 0; p < plane; ++p) {
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(cube.cube.data()[p * bands + k]));
            for (int i = 0; i < 4; ++i) raw[4 * (k * plane + p) + i] = static_cast<unsigned char>(bits >> (8 * i));
        }
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    write_label_raster(cube.labels, labels_path);
}

std::size_t slide_lattice_size(std::size_t slide) { return (2 * slide + 1) * (2 * slide + 1); }

Patch crop(const Tensor3& image, std::size_t row, std::size_t col, std::size_t side) {
    if (row + side > image.rows() || col + side > image.cols()) throw InvalidInput("crop window leaves the image");
    Patch patch(side, side, image.channels());
    const std::size_t b = image.channels();
    for (std::size_t r = 0; r < side; ++r) {
        const double* src = image.data().data() + ((row + r) * image.cols() + col) * b;
        std::copy(src, src + side * b, patch.data().data() + r * side * b);
    }
    return patch;
}

TaskDataset build_task(const ImageStore& store, const SamplerConfig& config, Rng& rng) {
    if (store.images.empty()) throw InvalidInput("image store is empty");
    std::vector<const Tensor3*> sources;
    for (const auto& img : store.images) sources.push_back(&img);
    return build_from_sources(std::move(sources), config, rng);
}

TaskDataset build_task(const HsiCube& cube, const SamplerConfig& config, Rng& rng) {
    return build_from_sources({&cube.cube}, config, rng);
}

Patch augment_patch(Patch x, const SamplerConfig& config, Rng& rng) {
    if (x.channels() != 3) throw InvalidInput("augment_patch requires a 3-channel patch");
    std::bernoulli_distribution gray(config.gray_probability);
    auto& data = x.data();
    if (gray(rng)) {
        for (std::size_t p = 0; p < data.size(); p += 3) {
            const double luma = 0.299 * data[p] + 0.587 * data[p + 1] + 0.114 * data[p + 2];
            data[p] = data[p + 1] = data[p + 2] = luma;
        }
        return x;
    }
    std::uniform_real_distribution<double> jitter(1.0 - config.jitter_amplitude, 1.0 + config.jitter_amplitude);
    const double factors[3] = {jitter(rng), jitter(rng), jitter(rng)};
    for (std::size_t p = 0; p < data.size(); p += 3) {
        for (std::size_t ch = 0; ch < 3; ++ch) data[p + ch] = std::clamp(data[p + ch] * factors[ch], 0.0, 1.0);
    }
    return x;
}

std::pair<TaskDataset, TaskDataset> split_em(const TaskDataset& task, double e_fraction, Rng& rng) {
    if (!(e_fraction > 0.0 && e_fraction < 1.0)) throw InvalidInput("split fraction must lie in (0,1)");
    std::vector<std::vector<std::size_t>> by_class(task.classes);
    for (std::size_t i = 0; i < task.examples.size(); ++i) {
        const std::size_t label = task.examples[i].label;
        if (label >= task.classes) throw InvalidInput("example label outside [0, C)");
        by_class[label].push_back(i);
    }
    TaskDataset e_set, m_set;
    e_set.classes = m_set.classes = task.classes;
    for (std::size_t c = 0; c < task.classes; ++c) {
        auto& idx = by_class[c];
        const auto take = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * e_fraction));
        if (take == 0 || take >= idx.size()) {
            std::ostringstream msg;
            msg << "split fraction " << e_fraction << " leaves class " << c << " (" << idx.size()
                << " examples) empty on one side";
            throw InvalidInput(msg.str());
        }
        std::shuffle(idx.begin(), idx.end(), rng);
        // Keep original order within each side.
        std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
        std::sort(idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            (k < take ? e_set : m_set).examples.push_back(task.examples[idx[k]]);
        }
        if (c == 0) {
            e_set.per_class = take;
            m_set.per_class = idx.size() - take;
        }
    }
    return {std::move(e_set), std::move(m_set)};
}

}  // namespace cgcnn
