#include "cgcnn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <sstream>

#include "cgcnn/error.hpp"

namespace cgcnn {

namespace {

constexpr std::size_t kMaxConsecutiveAborts = 3;

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void TrainerConfig::validate() const {
    if (epochs_e == 0 || epochs_m == 0) throw InvalidInput("trainer: epoch counts must be positive");
    if (minibatch == 0) throw InvalidInput("trainer: minibatch must be positive");
    if (max_iterations == 0) throw InvalidInput("trainer: max_iterations must be positive");
    if (convergence_window < 2) throw InvalidInput("trainer: convergence window must be >= 2");
    if (!(e_fraction > 0.0 && e_fraction < 1.0)) throw InvalidInput("trainer: e_fraction must lie in (0,1)");
}

void TrainingTrace::append(const IterationRecord& record) {
    if (!records_.empty() && record.iteration <= records_.back().iteration) {
        throw InvalidInput("trace iterations must be strictly increasing");
    }
    if (!(record.accuracy >= 0.0 && record.accuracy <= 1.0)) throw InvalidInput("accuracy outside [0,1]");
    records_.push_back(record);
}

std::string TrainingTrace::to_csv() const {
    std::ostringstream out;
    out << "iteration,A,loss_E,loss_M,seconds\n";
    for (const auto& r : records_) {
        out << r.iteration << ',' << format_double(r.accuracy) << ',' << format_double(r.loss_e) << ','
            << format_double(r.loss_m) << ',' << format_double(r.seconds) << '\n';
    }
    return out.str();
}

std::vector<FeatureVector> extract_features(const ConvFeatureBank& bank, const TaskDataset& task) {
    std::vector<FeatureVector> out;
    out.reserve(task.examples.size());
    for (const auto& e : task.examples) out.push_back(feature_forward(e.patch, bank));
    return out;
}

HeadFit train_head(std::span<const FeatureVector> features, std::span<const std::size_t> labels,
                   std::size_t classes, const OptimizerSettings& settings, std::size_t epochs,
                   std::size_t minibatch, Rng& rng) {
    if (features.empty()) throw InvalidInput("cannot train a head on an empty set");
    if (features.size() != labels.size()) throw InvalidInput("feature and label counts differ");
    const std::size_t dim = features.front().size();
    HeadFit fit{ClassifierHead::random(classes, dim, rng), 0.0};
    OptimizerState state(settings);

    std::vector<const FeatureVector*> batch;
    std::vector<std::size_t> batch_labels;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const auto order = shuffled_indices(features.size(), rng);
        for (std::size_t start = 0; start < order.size(); start += minibatch) {
            const std::size_t stop = std::min(order.size(), start + minibatch);
            batch.clear();
            batch_labels.clear();
            for (std::size_t i = start; i < stop; ++i) {
                batch.push_back(&features[order[i]]);
                batch_labels.push_back(labels[order[i]]);
            }
            const LossAndGrads lg = head_loss_and_grads(batch, batch_labels, fit.head);
            optimizer_step(fit.head.weights(), lg.grads.d_head, state);
        }
    }

    std::vector<const FeatureVector*> all;
    all.reserve(features.size());
    for (const auto& f : features) all.push_back(&f);
    fit.final_loss = head_loss_and_grads(all, labels, fit.head).loss;
    return fit;
}

TransferableAccuracy accuracy_on_features(std::span<const FeatureVector> features,
                                          std::span<const std::size_t> labels, const ClassifierHead& head) {
    if (features.empty()) throw InvalidInput("accuracy of an empty evaluation set");
    if (features.size() != labels.size()) throw InvalidInput("feature and label counts differ");
    TransferableAccuracy acc;
    acc.samples = features.size();
    acc.classes = head.classes();
    for (std::size_t t = 0; t < features.size(); ++t) {
        if (argmax(classify(features[t], head)) == labels[t]) ++acc.correct;
    }
    acc.value = static_cast<double>(acc.correct) / static_cast<double>(acc.samples);
    return acc;
}

HeadFit e_step(const ConvFeatureBank& bank, const TaskDataset& x_e, const TrainerConfig& config, Rng& rng) {
    const auto features = extract_features(bank, x_e);
    const auto labels = x_e.labels();
    return train_head(features, labels, x_e.classes, config.head_optimizer, config.epochs_e, config.minibatch, rng);
}

TransferableAccuracy measure_transfer_accuracy(const ConvFeatureBank& bank, const ClassifierHead& head,
                                               const TaskDataset& x_m) {
    if (x_m.examples.empty()) throw InvalidInput("X_M is empty");
    const auto features = extract_features(bank, x_m);
    return accuracy_on_features(features, x_m.labels(), head);
}

BankFit m_step(const ConvFeatureBank& bank, const ClassifierHead& head, const TaskDataset& x_m,
               const TrainerConfig& config, Rng& rng, OptimizerState* bank_state) {
    if (x_m.examples.empty()) throw InvalidInput("X_M is empty");
    OptimizerState fresh(config.bank_optimizer);
    // Filters and biases are optimized as one vector, filters first.
    OptimizerState& state = bank_state != nullptr ? *bank_state : fresh;
    BankFit fit{bank, 0.0};
    const auto refs = x_m.refs();
    const auto split = static_cast<std::ptrdiff_t>(bank.filters().size());
    std::vector<LabeledPatchRef> batch;
    std::vector<double> params;
    std::vector<double> grads;
    for (std::size_t epoch = 0; epoch < config.epochs_m; ++epoch) {
        const auto order = shuffled_indices(refs.size(), rng);
        for (std::size_t start = 0; start < order.size(); start += config.minibatch) {
            const std::size_t stop = std::min(order.size(), start + config.minibatch);
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(refs[order[i]]);
            const LossAndGrads lg = loss_and_grads(batch, fit.bank, head, false, true);
            params.assign(fit.bank.filters().begin(), fit.bank.filters().end());
            params.insert(params.end(), fit.bank.biases().begin(), fit.bank.biases().end());
            grads.assign(lg.grads.d_filters.begin(), lg.grads.d_filters.end());
            grads.insert(grads.end(), lg.grads.d_biases.begin(), lg.grads.d_biases.end());
            optimizer_step(params, grads, state);
            std::copy(params.begin(), params.begin() + split, fit.bank.filters().begin());
            std::copy(params.begin() + split, params.end(), fit.bank.biases().begin());
        }
    }
    if (!fit.bank.all_finite()) throw NumericalError("M-step produced non-finite bank parameters");
    fit.final_loss = loss_and_grads(refs, fit.bank, head, true, true).loss;
    return fit;
}

bool has_converged(const TrainingTrace& trace, std::size_t window, double threshold) {
    if (window < 2) throw InvalidInput("convergence window must be >= 2");
    const auto& r = trace.records();
    if (r.size() < window) return false;
    double lo = r[r.size() - window].accuracy;
    double hi = lo;
    for (std::size_t i = r.size() - window; i < r.size(); ++i) {
        lo = std::min(lo, r[i].accuracy);
        hi = std::max(hi, r[i].accuracy);
    }
    return hi - lo < threshold;
}

TrainingResult train_cgcnn(ConvFeatureBank initial, const TaskBuilder& build, const TrainerConfig& config, Rng& rng,
                           const IterationObserver& observer) {
    config.validate();
    TrainingResult result{std::move(initial), {}, false, 0};
    OptimizerState bank_state(config.bank_optimizer);
    std::size_t consecutive_aborts = 0;
    for (std::size_t iteration = 1; iteration <= config.max_iterations; ++iteration) {
        const auto started = std::chrono::steady_clock::now();
        try {
            const TaskDataset task = build(rng);
            const auto [x_e, x_m] = split_em(task, config.e_fraction, rng);
            const HeadFit head = e_step(result.bank, x_e, config, rng);
            const TransferableAccuracy acc = measure_transfer_accuracy(result.bank, head.head, x_m);
            OptimizerState trial_state = bank_state;
            BankFit updated = m_step(result.bank, head.head, x_m, config, rng, &trial_state);

            result.bank = std::move(updated.bank);
            bank_state = std::move(trial_state);
            IterationRecord record{iteration, acc.value, head.final_loss, updated.final_loss, 0.0};
            if (config.record_wall_time) {
                record.seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
            }
            result.trace.append(record);
            consecutive_aborts = 0;
            if (observer) observer(record, result.bank);
        } catch (const NumericalError& e) {
            ++result.aborted_iterations;
            std::cerr << "warning: EM iteration " << iteration << " aborted: " << e.what() << "\n";
            if (++consecutive_aborts > kMaxConsecutiveAborts) {
                throw TrainingFailure("training failed: " + std::to_string(consecutive_aborts) +
                                      " consecutive EM iterations diverged");
            }
            continue;
        }
        if (has_converged(result.trace, config.convergence_window, config.convergence_threshold)) {
            result.converged = true;
            break;
        }
    }
    return result;
}

TrainingResult train_cgcnn(const ImageStore& source, const SamplerConfig& sampler, const BankGeometry& geometry,
                           const TrainerConfig& config, const IterationObserver& observer) {
    Rng rng(config.seed);
    ConvFeatureBank bank = ConvFeatureBank::random(geometry, rng);
    return train_cgcnn(
        std::move(bank), [&](Rng& r) { return build_task(source, sampler, r); }, config, rng, observer);
}

TrainingResult train_cgcnn(const HsiCube& source, const SamplerConfig& sampler, const BankGeometry& geometry,
                           const TrainerConfig& config, const IterationObserver& observer) {
    Rng rng(config.seed);
    ConvFeatureBank bank = ConvFeatureBank::random(geometry, rng);
    return train_cgcnn(
        std::move(bank), [&](Rng& r) { return build_task(source, sampler, r); }, config, rng, observer);
}

}  // namespace cgcnn
