#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgcnn/nn.hpp"
#include "cgcnn/optimizer.hpp"
#include "cgcnn/sampler.hpp"
#include "cgcnn/trainer.hpp"

namespace cgcnn {

// How a downstream head (or a task-specific bank + head) is fitted.
struct FitConfig {
    OptimizerSettings optimizer;
    std::size_t epochs = 20;
    std::size_t minibatch = 64;
    double train_fraction = 0.5;
};

// Deterministic child generator for (seed, stream...) so trials can run in any order.
Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);

// Trains a fresh head on the train side of `task` with `bank` frozen and returns
// held-out accuracy.
TransferableAccuracy eval_frozen(const ConvFeatureBank& bank, const TaskDataset& task, const FitConfig& fit,
                                 Rng& rng);

// Trains a bank (random init with `geometry`) and head jointly on the train side.
// Throws NumericalError on divergence.
TransferableAccuracy eval_specific(const TaskDataset& task, const BankGeometry& geometry, const FitConfig& fit,
                                   Rng& rng);

enum class BankKind { Random, ContextGuided, Specific };
std::string to_string(BankKind kind);

struct UtilityPoint {
    std::size_t classes = 0;
    double mean = 0.0;
    double std = 0.0;
    std::size_t trials = 0;  // successful trials behind mean/std
    std::size_t failed = 0;
};

struct UtilityCurve {
    BankKind kind = BankKind::Random;
    std::vector<UtilityPoint> points;

    std::vector<double> means() const;
};

struct UtilityReport {
    UtilityCurve random;
    UtilityCurve guided;
    UtilityCurve specific;
    double utility = 0.0;  // U
};

// Normalized area between curves with trapezoidal integration over C.
double transfer_utility(std::span<const std::size_t> grid, std::span<const double> random,
                        std::span<const double> guided, std::span<const double> specific);

struct UtilityConfig {
    std::vector<std::size_t> grid{1, 2, 4, 8, 16, 32, 64};
    std::size_t trials = 10;
    FitConfig frozen;
    FitConfig specific;
    std::uint64_t seed = 0;
};

// Builds a C-group task from held-out data for the given C and rng.
using ClassTaskBuilder = std::function<TaskDataset(std::size_t classes, Rng& rng)>;

UtilityReport utility_curves(const ConvFeatureBank& guided_bank, const ClassTaskBuilder& build,
                             const UtilityConfig& config);

// Majority vote among the K Euclidean nearest neighbours. Distance ties go to the
// lower training index, vote ties to the lower class index.
std::vector<std::size_t> knn_classify(std::span<const FeatureVector> train, std::span<const std::size_t> train_labels,
                                      std::span<const FeatureVector> queries, std::size_t k);

struct BenchResult {
    double overall_accuracy = 0.0;  // trace / total of the pooled confusion matrix
    double std_accuracy = 0.0;      // sample std over runs or folds
    std::vector<double> run_accuracies;
    // confusion[true][predicted], pooled over runs / folds.
    std::vector<std::vector<std::size_t>> confusion;
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<std::string> class_names;
    // Classes too small to appear in every test fold; always kept in training.
    std::vector<std::size_t> flagged_classes;

    std::size_t total() const;
    std::size_t correct() const;
};

// Fills overall accuracy, std and per-class precision/recall.
void finalize(BenchResult& result);

struct TextureWindow {
    std::size_t image = 0;
    std::size_t row = 0;
    std::size_t col = 0;
};

struct TextureSplit {
    std::vector<TextureWindow> train;
    std::vector<TextureWindow> test;
};

struct TextureConfig {
    std::size_t patch = 19;
    std::size_t subregion = 32;
    std::size_t runs = 10;
    FitConfig head;
    std::uint64_t seed = 0;
};

// One run's windows: each image's subregion grid is shuffled, half of the cells go to
// training and half to testing, and each chosen cell holds one patch entirely inside it.
TextureSplit make_texture_split(std::span<const Tensor3> images, const TextureConfig& config, Rng& rng);

// Frozen-feature softmax benchmark on grayscale textures (one class per image).
BenchResult texture_benchmark(const ConvFeatureBank& bank, std::span<const Tensor3> textures,
                              const TextureConfig& config);

// Raw-pixel 1-NN baseline on the same splits as texture_benchmark with the same config.
BenchResult texture_pixel_baseline(std::span<const Tensor3> textures, const TextureConfig& config);

struct HsiBenchConfig {
    std::size_t folds = 10;
    std::size_t neighbors = 1;
    std::uint64_t seed = 0;
};

// Frozen features of every pixel's neighbourhood (clamp-to-border), side = w + 2s.
FeatureVector hsi_pixel_features(const ConvFeatureBank& bank, const HsiCube& cube, std::size_t row,
                                 std::size_t col);

// Per-class stratified fold assignment; classes smaller than `folds` get no test fold.
struct FoldAssignment {
    std::vector<std::size_t> pixel;                  // flat pixel index of each labeled sample
    std::vector<std::size_t> label;                  // 0-based class index
    std::vector<std::optional<std::size_t>> fold;    // empty for training-only samples
    std::vector<std::size_t> flagged_classes;
};
FoldAssignment stratified_folds(const HsiCube& cube, std::size_t folds, Rng& rng);

BenchResult hsi_benchmark(const ConvFeatureBank& bank, const HsiCube& cube, const HsiBenchConfig& config);

nlohmann::json to_json(const UtilityReport& report);
std::string utility_csv(const UtilityReport& report);
nlohmann::json to_json(const BenchResult& result);
std::string per_class_csv(const BenchResult& result);
std::string confusion_csv(const BenchResult& result);

}  // namespace cgcnn
