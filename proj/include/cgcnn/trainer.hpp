#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "cgcnn/nn.hpp"
#include "cgcnn/optimizer.hpp"
#include "cgcnn/sampler.hpp"

namespace cgcnn {

struct TrainerConfig {
    std::size_t epochs_e = 1;
    std::size_t epochs_m = 1;
    OptimizerSettings head_optimizer;
    OptimizerSettings bank_optimizer;
    std::size_t minibatch = 64;
    std::size_t max_iterations = 100;
    std::size_t convergence_window = 10;
    double convergence_threshold = 0.01;
    double e_fraction = 0.5;
    std::uint64_t seed = 0;
    // Wall time goes into the trace only when enabled; otherwise the column is 0.
    bool record_wall_time = false;

    void validate() const;
};

struct IterationRecord {
    std::size_t iteration = 0;  // 1-based
    double accuracy = 0.0;      // A on X_M
    double loss_e = 0.0;
    double loss_m = 0.0;
    double seconds = 0.0;
};

class TrainingTrace {
public:
    void append(const IterationRecord& record);
    const std::vector<IterationRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    // iteration,A,loss_E,loss_M,seconds
    std::string to_csv() const;

private:
    std::vector<IterationRecord> records_;
};

struct TransferableAccuracy {
    double value = 0.0;
    std::size_t correct = 0;
    std::size_t samples = 0;
    std::size_t classes = 0;
};

struct HeadFit {
    ClassifierHead head;
    double final_loss = 0.0;  // mean loss over the training set after the last epoch
};

struct BankFit {
    ConvFeatureBank bank;
    double final_loss = 0.0;
};

// Features of every example, in dataset order.
std::vector<FeatureVector> extract_features(const ConvFeatureBank& bank, const TaskDataset& task);

// Minibatch head training on fixed features from a fresh random head.
HeadFit train_head(std::span<const FeatureVector> features, std::span<const std::size_t> labels,
                   std::size_t classes, const OptimizerSettings& settings, std::size_t epochs,
                   std::size_t minibatch, Rng& rng);

// Fraction of argmax hits of `head` on fixed features; ties go to the lowest class index.
TransferableAccuracy accuracy_on_features(std::span<const FeatureVector> features,
                                          std::span<const std::size_t> labels, const ClassifierHead& head);

// E-step: fresh head trained on X_E with the bank frozen.
HeadFit e_step(const ConvFeatureBank& bank, const TaskDataset& x_e, const TrainerConfig& config, Rng& rng);

TransferableAccuracy measure_transfer_accuracy(const ConvFeatureBank& bank, const ClassifierHead& head,
                                               const TaskDataset& x_m);

// M-step: bank updated on X_M with the head frozen. `bank_state` carries optimizer
// memory across calls; pass nullptr for a fresh state.
BankFit m_step(const ConvFeatureBank& bank, const ClassifierHead& head, const TaskDataset& x_m,
               const TrainerConfig& config, Rng& rng, OptimizerState* bank_state = nullptr);

bool has_converged(const TrainingTrace& trace, std::size_t window, double threshold);

using IterationObserver = std::function<void(const IterationRecord&, const ConvFeatureBank&)>;

struct TrainingResult {
    ConvFeatureBank bank;
    TrainingTrace trace;
    bool converged = false;
    std::size_t aborted_iterations = 0;
};

// Full EM loop from a random bank.
TrainingResult train_cgcnn(const ImageStore& source, const SamplerConfig& sampler, const BankGeometry& geometry,
                           const TrainerConfig& config, const IterationObserver& observer = {});
TrainingResult train_cgcnn(const HsiCube& source, const SamplerConfig& sampler, const BankGeometry& geometry,
                           const TrainerConfig& config, const IterationObserver& observer = {});

// Continues EM training from an existing bank.
using TaskBuilder = std::function<TaskDataset(Rng&)>;
TrainingResult train_cgcnn(ConvFeatureBank initial, const TaskBuilder& build, const TrainerConfig& config,
                           Rng& rng, const IterationObserver& observer = {});

}  // namespace cgcnn
