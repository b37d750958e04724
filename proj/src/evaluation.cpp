#include "cgcnn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "cgcnn/error.hpp"

namespace cgcnn {

namespace {

double sample_std(std::span<const double> values) {
    if (values.size() < 2) return 0.0;
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double trapezoid(std::span<const std::size_t> grid, std::span<const double> values) {
    double area = 0.0;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        area += static_cast<double>(grid[i + 1] - grid[i]) * (values[i] + values[i + 1]) / 2.0;
    }
    return area;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Converts a grayscale patch to the bank's channel depth.
Patch to_bank_channels(Patch gray, std::size_t channels) {
    if (channels == 1) return gray;
    if (channels != 3) throw InvalidInput("texture benchmark supports banks with 1 or 3 channels");
    Patch out(gray.rows(), gray.cols(), 3);
    for (std::size_t r = 0; r < gray.rows(); ++r) {
        for (std::size_t c = 0; c < gray.cols(); ++c) {
            out(r, c, 0) = out(r, c, 1) = out(r, c, 2) = gray(r, c, 0);
        }
    }
    return out;
}

void fill_confusion(BenchResult& result, std::span<const std::size_t> truth, std::span<const std::size_t> predicted) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ++result.confusion[truth[i]][predicted[i]];
        if (truth[i] == predicted[i]) ++correct;
    }
    result.run_accuracies.push_back(static_cast<double>(correct) / static_cast<double>(truth.size()));
}

struct ExtractedSplit {
    std::vector<Patch> train;
    std::vector<std::size_t> train_labels;
    std::vector<Patch> test;
    std::vector<std::size_t> test_labels;
};

ExtractedSplit cut_split(std::span<const Tensor3> textures, const TextureSplit& split, std::size_t patch) {
    ExtractedSplit out;
    for (const auto& w : split.train) {
        out.train.push_back(crop(textures[w.image], w.row, w.col, patch));
        out.train_labels.push_back(w.image);
    }
    for (const auto& w : split.test) {
        out.test.push_back(crop(textures[w.image], w.row, w.col, patch));
        out.test_labels.push_back(w.image);
    }
    return out;
}

void check_textures(std::span<const Tensor3> textures) {
    if (textures.empty()) throw InvalidInput("texture benchmark needs at least one image");
    for (const auto& t : textures) {
        if (t.channels() != 1) throw InvalidInput("texture images must be single-channel");
    }
}

BenchResult empty_result(std::size_t classes) {
    BenchResult r;
    r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
    return r;
}

}  // namespace

Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
    std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    for (auto s : stream) {
        words.push_back(static_cast<std::uint32_t>(s));
        words.push_back(static_cast<std::uint32_t>(s >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

TransferableAccuracy eval_frozen(const ConvFeatureBank& bank, const TaskDataset& task, const FitConfig& fit,
                                 Rng& rng) {
    const auto [train, test] = split_em(task, fit.train_fraction, rng);
    const auto train_features = extract_features(bank, train);
    const HeadFit head = train_head(train_features, train.labels(), task.classes, fit.optimizer, fit.epochs,
                                    fit.minibatch, rng);
    return measure_transfer_accuracy(bank, head.head, test);
}

TransferableAccuracy eval_specific(const TaskDataset& task, const BankGeometry& geometry, const FitConfig& fit,
                                   Rng& rng) {
    const auto [train, test] = split_em(task, fit.train_fraction, rng);
    ConvFeatureBank bank = ConvFeatureBank::random(geometry, rng);
    const std::size_t side = train.examples.front().patch.rows();
    ClassifierHead head = ClassifierHead::random(task.classes, feature_length(side, geometry), rng);
    OptimizerState bank_state(fit.optimizer);
    OptimizerState head_state(fit.optimizer);

    const auto refs = train.refs();
    std::vector<std::size_t> order(refs.size());
    std::vector<LabeledPatchRef> batch;
    std::vector<double> params, grads;
    const auto split = static_cast<std::ptrdiff_t>(bank.filters().size());
    for (std::size_t epoch = 0; epoch < fit.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += fit.minibatch) {
            batch.clear();
            for (std::size_t i = start; i < std::min(order.size(), start + fit.minibatch); ++i) {
                batch.push_back(refs[order[i]]);
            }
            const LossAndGrads lg = loss_and_grads(batch, bank, head, false, false);
            params.assign(bank.filters().begin(), bank.filters().end());
            params.insert(params.end(), bank.biases().begin(), bank.biases().end());
            grads.assign(lg.grads.d_filters.begin(), lg.grads.d_filters.end());
            grads.insert(grads.end(), lg.grads.d_biases.begin(), lg.grads.d_biases.end());
            optimizer_step(params, grads, bank_state);
            std::copy(params.begin(), params.begin() + split, bank.filters().begin());
            std::copy(params.begin() + split, params.end(), bank.biases().begin());
            optimizer_step(head.weights(), lg.grads.d_head, head_state);
        }
    }
    return measure_transfer_accuracy(bank, head, test);
}

std::string to_string(BankKind kind) {
    switch (kind) {
        case BankKind::Random: return "random";
        case BankKind::ContextGuided: return "cg";
        case BankKind::Specific: return "specific";
    }
    return "unknown";
}

std::vector<double> UtilityCurve::means() const {
    std::vector<double> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(p.mean);
    return out;
}

double transfer_utility(std::span<const std::size_t> grid, std::span<const double> random,
                        std::span<const double> guided, std::span<const double> specific) {
    if (grid.size() < 2) throw InvalidInput("transfer utility needs at least two grid points");
    if (random.size() != grid.size() || guided.size() != grid.size() || specific.size() != grid.size()) {
        throw InvalidInput("every curve must have one value per grid point");
    }
    if (!std::is_sorted(grid.begin(), grid.end()) ||
        std::adjacent_find(grid.begin(), grid.end()) != grid.end()) {
        throw InvalidInput("C grid must be strictly increasing");
    }
    const double base = trapezoid(grid, random);
    const double denominator = trapezoid(grid, specific) - base;
    if (denominator == 0.0) throw NumericalError("specific and random curves enclose zero area");
    return (trapezoid(grid, guided) - base) / denominator;
}

UtilityReport utility_curves(const ConvFeatureBank& guided_bank, const ClassTaskBuilder& build,
                             const UtilityConfig& config) {
    if (config.trials == 0) throw InvalidInput("utility evaluation needs at least one trial per C");
    UtilityReport report;
    report.random.kind = BankKind::Random;
    report.guided.kind = BankKind::ContextGuided;
    report.specific.kind = BankKind::Specific;

    for (const std::size_t classes : config.grid) {
        std::vector<double> acc_random, acc_guided, acc_specific;
        std::size_t specific_failed = 0;
        for (std::size_t trial = 0; trial < config.trials; ++trial) {
            Rng task_rng = derive_rng(config.seed, {classes, trial, 0});
            const TaskDataset task = build(classes, task_rng);
            Rng bank_rng = derive_rng(config.seed, {classes, trial, 1});
            const ConvFeatureBank random_bank = ConvFeatureBank::random(guided_bank.geometry(), bank_rng);
            // Identical generator state gives every evaluator the same split.
            const Rng eval_rng = derive_rng(config.seed, {classes, trial, 2});

            Rng r1 = eval_rng;
            acc_random.push_back(eval_frozen(random_bank, task, config.frozen, r1).value);
            Rng r2 = eval_rng;
            acc_guided.push_back(eval_frozen(guided_bank, task, config.frozen, r2).value);
            Rng r3 = eval_rng;
            try {
                acc_specific.push_back(eval_specific(task, guided_bank.geometry(), config.specific, r3).value);
            } catch (const NumericalError&) {
                ++specific_failed;
            }
        }
        auto point = [&](const std::vector<double>& values, std::size_t failed) {
            if (values.empty()) {
                throw NumericalError("no successful trial at C=" + std::to_string(classes));
            }
            const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
            return UtilityPoint{classes, mean, sample_std(values), values.size(), failed};
        };
        report.random.points.push_back(point(acc_random, 0));
        report.guided.points.push_back(point(acc_guided, 0));
        report.specific.points.push_back(point(acc_specific, specific_failed));
    }
    report.utility =
        transfer_utility(config.grid, report.random.means(), report.guided.means(), report.specific.means());
    return report;
}

std::vector<std::size_t> knn_classify(std::span<const FeatureVector> train, std::span<const std::size_t> train_labels,
                                      std::span<const FeatureVector> queries, std::size_t k) {
    if (k == 0) throw InvalidInput("K must be >= 1");
    if (train.empty()) throw InvalidInput("k-NN needs a nonempty training set");
    if (train.size() != train_labels.size()) throw InvalidInput("training vectors and labels differ in count");
    const std::size_t dim = train.front().size();
    for (const auto& t : train) {
        if (t.size() != dim) throw InvalidInput("training vectors differ in length");
    }
    const std::size_t classes = *std::max_element(train_labels.begin(), train_labels.end()) + 1;
    const std::size_t kk = std::min(k, train.size());

    std::vector<std::size_t> out;
    out.reserve(queries.size());
    std::vector<std::pair<double, std::size_t>> dist(train.size());
    std::vector<std::size_t> votes(classes);
    for (const auto& q : queries) {
        if (q.size() != dim) throw InvalidInput("query length differs from training vectors");
        if (kk == 1) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t best_idx = 0;
            for (std::size_t i = 0; i < train.size(); ++i) {
                const double* t = train[i].data();
                double d2 = 0.0;
                for (std::size_t j = 0; j < dim; ++j) {
                    const double diff = t[j] - q[j];
                    d2 += diff * diff;
                }
                if (d2 < best) {
                    best = d2;
                    best_idx = i;
                }
            }
            out.push_back(train_labels[best_idx]);
            continue;
        }
        for (std::size_t i = 0; i < train.size(); ++i) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double diff = train[i][j] - q[j];
                d2 += diff * diff;
            }
            dist[i] = {d2, i};
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
        std::fill(votes.begin(), votes.end(), 0);
        for (std::size_t i = 0; i < kk; ++i) ++votes[train_labels[dist[i].second]];
        out.push_back(static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin()));
    }
    return out;
}

std::size_t BenchResult::total() const {
    std::size_t n = 0;
    for (const auto& row : confusion) n = std::accumulate(row.begin(), row.end(), n);
    return n;
}

std::size_t BenchResult::correct() const {
    std::size_t n = 0;
    for (std::size_t c = 0; c < confusion.size(); ++c) n += confusion[c][c];
    return n;
}

void finalize(BenchResult& result) {
    const std::size_t classes = result.confusion.size();
    const std::size_t total = result.total();
    result.overall_accuracy = total == 0 ? 0.0 : static_cast<double>(result.correct()) / static_cast<double>(total);
    result.std_accuracy = sample_std(result.run_accuracies);
    result.precision.assign(classes, 0.0);
    result.recall.assign(classes, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
        std::size_t row = 0, col = 0;
        for (std::size_t o = 0; o < classes; ++o) {
            row += result.confusion[c][o];
            col += result.confusion[o][c];
        }
        const double hit = static_cast<double>(result.confusion[c][c]);
        result.recall[c] = row == 0 ? 0.0 : hit / static_cast<double>(row);
        result.precision[c] = col == 0 ? 0.0 : hit / static_cast<double>(col);
    }
    if (result.class_names.size() != classes) {
        result.class_names.clear();
        for (std::size_t c = 0; c < classes; ++c) result.class_names.push_back("class_" + std::to_string(c + 1));
    }
}

TextureSplit make_texture_split(std::span<const Tensor3> images, const TextureConfig& config, Rng& rng) {
    if (config.patch > config.subregion) {
        throw InvalidInput("patch side " + std::to_string(config.patch) + " exceeds subregion side " +
                           std::to_string(config.subregion) + "; disjoint train/test patches are impossible");
    }
    TextureSplit split;
    std::uniform_int_distribution<std::size_t> offset(0, config.subregion - config.patch);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::size_t grid_rows = images[i].rows() / config.subregion;
        const std::size_t grid_cols = images[i].cols() / config.subregion;
        const std::size_t cells = grid_rows * grid_cols;
        if (cells < 2) throw InvalidInput("texture image " + std::to_string(i) + " has fewer than two subregions");
        std::vector<std::size_t> order(cells);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t half = cells / 2;
        for (std::size_t k = 0; k < 2 * half; ++k) {
            const std::size_t cell = order[k];
            TextureWindow w{i, (cell / grid_cols) * config.subregion + offset(rng),
                            (cell % grid_cols) * config.subregion + offset(rng)};
            (k < half ? split.train : split.test).push_back(w);
        }
    }
    return split;
}

BenchResult texture_benchmark(const ConvFeatureBank& bank, std::span<const Tensor3> textures,
                              const TextureConfig& config) {
    check_textures(textures);
    const std::size_t classes = textures.size();
    BenchResult result = empty_result(classes);
    for (std::size_t run = 0; run < config.runs; ++run) {
        Rng split_rng = derive_rng(config.seed, {run, 0});
        const auto cut = cut_split(textures, make_texture_split(textures, config, split_rng), config.patch);
        std::vector<FeatureVector> train_features, test_features;
        for (const auto& p : cut.train) train_features.push_back(feature_forward(to_bank_channels(p, bank.channels()), bank));
        for (const auto& p : cut.test) test_features.push_back(feature_forward(to_bank_channels(p, bank.channels()), bank));
        Rng head_rng = derive_rng(config.seed, {run, 1});
        const HeadFit head = train_head(train_features, cut.train_labels, classes, config.head.optimizer,
                                        config.head.epochs, config.head.minibatch, head_rng);
        std::vector<std::size_t> predicted;
        for (const auto& f : test_features) predicted.push_back(argmax(classify(f, head.head)));
        fill_confusion(result, cut.test_labels, predicted);
    }
    finalize(result);
    return result;
}

BenchResult texture_pixel_baseline(std::span<const Tensor3> textures, const TextureConfig& config) {
    check_textures(textures);
    BenchResult result = empty_result(textures.size());
    for (std::size_t run = 0; run < config.runs; ++run) {
        Rng split_rng = derive_rng(config.seed, {run, 0});
        const auto cut = cut_split(textures, make_texture_split(textures, config, split_rng), config.patch);
        std::vector<FeatureVector> train, test;
        for (const auto& p : cut.train) train.push_back(p.data());
        for (const auto& p : cut.test) test.push_back(p.data());
        fill_confusion(result, cut.test_labels, knn_classify(train, cut.train_labels, test, 1));
    }
    finalize(result);
    return result;
}

FeatureVector hsi_pixel_features(const ConvFeatureBank& bank, const HsiCube& cube, std::size_t row, std::size_t col) {
    const std::size_t side = bank.geometry().pooled_window();
    const std::size_t bands = cube.bands();
    const auto half = static_cast<long long>(side / 2);
    Patch patch(side, side, bands);
    for (std::size_t r = 0; r < side; ++r) {
        const auto src_r = static_cast<std::size_t>(
            std::clamp<long long>(static_cast<long long>(row) + static_cast<long long>(r) - half, 0,
                                  static_cast<long long>(cube.rows()) - 1));
        for (std::size_t c = 0; c < side; ++c) {
            const auto src_c = static_cast<std::size_t>(
                std::clamp<long long>(static_cast<long long>(col) + static_cast<long long>(c) - half, 0,
                                      static_cast<long long>(cube.cols()) - 1));
            for (std::size_t k = 0; k < bands; ++k) patch(r, c, k) = cube.cube(src_r, src_c, k);
        }
    }
    return feature_forward(patch, bank);
}

FoldAssignment stratified_folds(const HsiCube& cube, std::size_t folds, Rng& rng) {
    if (folds < 2) throw InvalidInput("cross validation needs at least two folds");
    FoldAssignment out;
    std::map<std::size_t, std::vector<std::size_t>> members;  // class -> sample indices
    for (std::size_t p = 0; p < cube.labels.values.size(); ++p) {
        const std::size_t label = cube.labels.values[p];
        if (label == 0) continue;
        if (label > cube.class_count) throw InvalidInput("label raster holds a class index beyond the class count");
        members[label - 1].push_back(out.pixel.size());
        out.pixel.push_back(p);
        out.label.push_back(label - 1);
    }
    out.fold.assign(out.pixel.size(), std::nullopt);
    for (auto& [label, idx] : members) {
        if (idx.size() < folds) {
            out.flagged_classes.push_back(label);
            continue;
        }
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t k = 0; k < idx.size(); ++k) out.fold[idx[k]] = k % folds;
    }
    return out;
}

BenchResult hsi_benchmark(const ConvFeatureBank& bank, const HsiCube& cube, const HsiBenchConfig& config) {
    if (bank.channels() != cube.bands()) {
        throw InvalidInput("bank expects " + std::to_string(bank.channels()) + " bands, cube has " +
                           std::to_string(cube.bands()));
    }
    Rng rng = derive_rng(config.seed, {0});
    const FoldAssignment folds = stratified_folds(cube, config.folds, rng);
    if (folds.pixel.empty()) throw InvalidInput("cube has no labeled pixels");

    std::vector<FeatureVector> features;
    features.reserve(folds.pixel.size());
    for (const std::size_t p : folds.pixel) {
        features.push_back(hsi_pixel_features(bank, cube, p / cube.cols(), p % cube.cols()));
    }

    BenchResult result = empty_result(cube.class_count);
    result.class_names = cube.class_names;
    result.flagged_classes = folds.flagged_classes;
    for (std::size_t f = 0; f < config.folds; ++f) {
        std::vector<FeatureVector> train, test;
        std::vector<std::size_t> train_labels, test_labels;
        for (std::size_t i = 0; i < features.size(); ++i) {
            if (folds.fold[i] == f) {
                test.push_back(features[i]);
                test_labels.push_back(folds.label[i]);
            } else {
                train.push_back(features[i]);
                train_labels.push_back(folds.label[i]);
            }
        }
        if (test.empty()) continue;
        fill_confusion(result, test_labels, knn_classify(train, train_labels, test, config.neighbors));
    }
    finalize(result);
    return result;
}

nlohmann::json to_json(const UtilityReport& report) {
    auto curve = [](const UtilityCurve& c) {
        nlohmann::json points = nlohmann::json::array();
        for (const auto& p : c.points) {
            points.push_back(
                {{"C", p.classes}, {"mean", p.mean}, {"std", p.std}, {"trials", p.trials}, {"failed", p.failed}});
        }
        return nlohmann::json{{"kind", to_string(c.kind)}, {"points", points}};
    };
    return {{"U", report.utility},
            {"curves", {curve(report.random), curve(report.guided), curve(report.specific)}}};
}

std::string utility_csv(const UtilityReport& report) {
    std::ostringstream out;
    out << "C,random_mean,random_std,cg_mean,cg_std,specific_mean,specific_std,specific_failed\n";
    for (std::size_t i = 0; i < report.random.points.size(); ++i) {
        const auto& r = report.random.points[i];
        const auto& g = report.guided.points[i];
        const auto& s = report.specific.points[i];
        out << r.classes << ',' << format_double(r.mean) << ',' << format_double(r.std) << ','
            << format_double(g.mean) << ',' << format_double(g.std) << ',' << format_double(s.mean) << ','
            << format_double(s.std) << ',' << s.failed << '\n';
    }
    return out.str();
}

nlohmann::json to_json(const BenchResult& result) {
    nlohmann::json classes = nlohmann::json::array();
    for (std::size_t c = 0; c < result.confusion.size(); ++c) {
        std::size_t support = 0;
        for (auto v : result.confusion[c]) support += v;
        classes.push_back({{"name", result.class_names.at(c)},
                           {"precision", result.precision.at(c)},
                           {"recall", result.recall.at(c)},
                           {"support", support}});
    }
    return {{"overall_accuracy", result.overall_accuracy},
            {"std_accuracy", result.std_accuracy},
            {"run_accuracies", result.run_accuracies},
            {"classes", classes},
            {"flagged_classes", result.flagged_classes},
            {"confusion", result.confusion}};
}

std::string per_class_csv(const BenchResult& result) {
    std::ostringstream out;
    out << "class,name,precision,recall,support\n";
    for (std::size_t c = 0; c < result.confusion.size(); ++c) {
        std::size_t support = 0;
        for (auto v : result.confusion[c]) support += v;
        out << c + 1 << ',' << result.class_names.at(c) << ',' << format_double(result.precision.at(c)) << ','
            << format_double(result.recall.at(c)) << ',' << support << '\n';
    }
    return out.str();
}

std::string confusion_csv(const BenchResult& result) {
    std::ostringstream out;
    out << "true\\predicted";
    for (std::size_t c = 0; c < result.confusion.size(); ++c) out << ',' << c + 1;
    out << '\n';
    for (std::size_t r = 0; r < result.confusion.size(); ++r) {
        out << r + 1;
        for (auto v : result.confusion[r]) out << ',' << v;
        out << '\n';
    }
    return out.str();
}

}  // namespace cgcnn
