#include "cgcnn/commands.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>

#include "cgcnn/bank_io.hpp"
#include "cgcnn/error.hpp"
#include "cgcnn/filter_grid.hpp"
#include "cgcnn/image_io.hpp"

namespace cgcnn {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text, CommandOutcome& outcome) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
    outcome.artifacts.push_back(path);
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

ConvFeatureBank load_bank(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("bank file not found: " + path.string());
    return read_bank(path);
}

TrainingResult train_with_checkpoints(const RunConfig& cfg, const fs::path& out_dir, CommandOutcome& outcome,
                                      const auto& source) {
    IterationObserver observer;
    if (cfg.checkpoint_every > 0) {
        observer = [&](const IterationRecord& record, const ConvFeatureBank& bank) {
            if (record.iteration % cfg.checkpoint_every != 0) return;
            char name[48];
            std::snprintf(name, sizeof name, "checkpoint_%05zu.bin", record.iteration);
            write_bank(bank, out_dir / name);
            outcome.artifacts.push_back(out_dir / name);
        };
    }
    TrainingResult result = train_cgcnn(source, cfg.sampler, cfg.geometry, cfg.trainer, observer);
    write_bank(result.bank, out_dir / "bank.bin");
    outcome.artifacts.push_back(out_dir / "bank.bin");
    write_text(out_dir / "trace.csv", result.trace.to_csv(), outcome);
    return result;
}

HsiCube load_cube_for(const RunConfig& cfg) {
    HsiCube cube = load_hsi(cfg.paths.cube, cfg.paths.labels);
    if (cube.bands() != cfg.sampler.channels) {
        throw ConfigError("cube has " + std::to_string(cube.bands()) + " bands but sampler.b is " +
                          std::to_string(cfg.sampler.channels));
    }
    return cube;
}

std::string train_summary(const TrainingResult& result) {
    const double a = result.trace.empty() ? 0.0 : result.trace.records().back().accuracy;
    return "iterations=" + std::to_string(result.trace.size()) + " final_A=" + fixed(a, 4) +
           " converged=" + (result.converged ? "true" : "false");
}

}  // namespace

std::vector<Tensor3> load_texture_directory(const fs::path& directory) {
    if (!fs::is_directory(directory)) throw IoError("texture directory not found: " + directory.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(directory)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Tensor3> textures;
    for (const auto& f : files) {
        std::string ext = f.extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext != ".png" && ext != ".jpg" && ext != ".jpeg" && ext != ".pgm" && ext != ".tif" && ext != ".tiff" &&
            ext != ".bmp") {
            continue;
        }
        textures.push_back(read_gray(f));
    }
    if (textures.empty()) throw IoError("no texture images in " + directory.string());
    return textures;
}

CommandOutcome run_command(const RunConfig& cfg) {
    CommandOutcome outcome;
    const fs::path out_dir = cfg.paths.out;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
    write_text(out_dir / "manifest.json", cfg.resolved.dump(2) + "\n", outcome);

    switch (cfg.mode) {
        case RunMode::Train: {
            TrainingResult result;
            if (cfg.sampler.mode == SamplerMode::Hsi) {
                result = train_with_checkpoints(cfg, out_dir, outcome, load_cube_for(cfg));
            } else {
                const ImageStore store = load_rgb_dataset(cfg.paths.dataset);
                result = train_with_checkpoints(cfg, out_dir, outcome, store);
            }
            export_filter_grid(result.bank, out_dir / "filters.png");
            outcome.artifacts.push_back(out_dir / "filters.png");
            outcome.summary = "train: " + train_summary(result);
            break;
        }
        case RunMode::Utility: {
            const ConvFeatureBank bank = load_bank(cfg.paths.bank);
            if (bank.channels() != cfg.sampler.channels) {
                throw ConfigError("bank has " + std::to_string(bank.channels()) + " channels but sampler.b is " +
                                  std::to_string(cfg.sampler.channels));
            }
            const ImageStore holdout = load_rgb_dataset(cfg.paths.holdout);
            SamplerConfig sampler = cfg.sampler;
            const auto report = utility_curves(
                bank,
                [&](std::size_t classes, Rng& rng) {
                    SamplerConfig s = sampler;
                    s.classes = classes;
                    return build_task(holdout, s, rng);
                },
                cfg.utility);
            write_text(out_dir / "report.json", to_json(report).dump(2) + "\n", outcome);
            write_text(out_dir / "report.csv", utility_csv(report), outcome);
            outcome.summary = "utility: U=" + fixed(report.utility, 4);
            break;
        }
        case RunMode::Texture: {
            const ConvFeatureBank bank = load_bank(cfg.paths.bank);
            const auto textures = load_texture_directory(cfg.paths.textures);
            TextureConfig tc = cfg.texture;
            const BenchResult frozen = texture_benchmark(bank, textures, tc);
            const BenchResult pixels = texture_pixel_baseline(textures, tc);
            const nlohmann::json report{{"frozen_features", to_json(frozen)}, {"raw_pixel_1nn", to_json(pixels)}};
            write_text(out_dir / "report.json", report.dump(2) + "\n", outcome);
            write_text(out_dir / "report.csv", per_class_csv(frozen), outcome);
            write_text(out_dir / "confusion.csv", confusion_csv(frozen), outcome);
            outcome.summary = "texture: accuracy=" + fixed(frozen.overall_accuracy, 4) + " std=" +
                              fixed(frozen.std_accuracy, 4) + " pixel_1nn=" + fixed(pixels.overall_accuracy, 4);
            break;
        }
        case RunMode::Hsi: {
            const HsiCube cube = load_cube_for(cfg);
            ConvFeatureBank bank;
            if (!cfg.paths.bank.empty()) {
                bank = load_bank(cfg.paths.bank);
            } else {
                bank = train_with_checkpoints(cfg, out_dir, outcome, cube).bank;
            }
            const BenchResult result = hsi_benchmark(bank, cube, cfg.hsi);
            write_text(out_dir / "report.json", to_json(result).dump(2) + "\n", outcome);
            write_text(out_dir / "report.csv", per_class_csv(result), outcome);
            write_text(out_dir / "confusion.csv", confusion_csv(result), outcome);
            outcome.summary = "hsi: accuracy=" + fixed(result.overall_accuracy, 4) + " std=" +
                              fixed(result.std_accuracy, 4);
            break;
        }
        case RunMode::Export: {
            const ConvFeatureBank bank = load_bank(cfg.paths.bank);
            const auto grids = export_filter_grid(bank, out_dir / "filters.png");
            outcome.artifacts.push_back(out_dir / "filters.png");
            outcome.summary = "export-weights: tiles=" + std::to_string(bank.features()) +
                              " grids=" + std::to_string(grids.size());
            break;
        }
    }
    return outcome;
}

}  // namespace cgcnn
