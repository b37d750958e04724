#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "cgcnn/tensor.hpp"

namespace cgcnn {

using Rng = std::mt19937_64;

// Max-pool geometry of the feature generator. Fixed by the architecture.
inline constexpr std::size_t kPoolKernel = 3;
inline constexpr std::size_t kPoolStride = 2;

struct BankGeometry {
    std::size_t features = 0;  // d
    std::size_t kernel = 0;    // w
    std::size_t channels = 0;  // b
    std::size_t stride = 1;    // s

    // Patch side whose pooled output is exactly 1x1: w + 2s.
    std::size_t pooled_window() const { return kernel + kPoolStride * stride; }

    friend bool operator==(const BankGeometry&, const BankGeometry&) = default;
};

// The d convolution filters (w x w x b each) plus one bias per feature.
class ConvFeatureBank {
public:
    ConvFeatureBank() = default;
    explicit ConvFeatureBank(const BankGeometry& geometry);

    // Fan-in scaled Gaussian filters (sigma = sqrt(2 / (w*w*b))), zero biases.
    static ConvFeatureBank random(const BankGeometry& geometry, Rng& rng);

    const BankGeometry& geometry() const { return geometry_; }
    std::size_t features() const { return geometry_.features; }
    std::size_t kernel() const { return geometry_.kernel; }
    std::size_t channels() const { return geometry_.channels; }
    std::size_t stride() const { return geometry_.stride; }
    std::size_t filter_size() const { return geometry_.kernel * geometry_.kernel * geometry_.channels; }

    // Filters in (feature, row, col, channel) order.
    std::vector<double>& filters() { return filters_; }
    const std::vector<double>& filters() const { return filters_; }
    std::vector<double>& biases() { return biases_; }
    const std::vector<double>& biases() const { return biases_; }

    double weight(std::size_t k, std::size_t r, std::size_t c, std::size_t ch) const {
        return filters_[((k * geometry_.kernel + r) * geometry_.kernel + c) * geometry_.channels + ch];
    }
    std::span<const double> filter(std::size_t k) const {
        return std::span<const double>(filters_).subspan(k * filter_size(), filter_size());
    }

    std::size_t parameter_count() const { return filters_.size() + biases_.size(); }
    bool all_finite() const;

    friend bool operator==(const ConvFeatureBank&, const ConvFeatureBank&) = default;

private:
    BankGeometry geometry_;
    std::vector<double> filters_;
    std::vector<double> biases_;
};

// Softmax classifier weights, one row per class, no bias.
class ClassifierHead {
public:
    ClassifierHead() = default;
    ClassifierHead(std::size_t classes, std::size_t dim);

    // Zero-mean Gaussian entries with sigma = 1/sqrt(dim).
    static ClassifierHead random(std::size_t classes, std::size_t dim, Rng& rng);

    std::size_t classes() const { return classes_; }
    std::size_t dim() const { return dim_; }
    std::vector<double>& weights() { return weights_; }
    const std::vector<double>& weights() const { return weights_; }
    std::span<const double> row(std::size_t c) const {
        return std::span<const double>(weights_).subspan(c * dim_, dim_);
    }

    friend bool operator==(const ClassifierHead&, const ClassifierHead&) = default;

private:
    std::size_t classes_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> weights_;
};

using ProbVector = std::vector<double>;

struct LabeledPatchRef {
    const Patch* patch = nullptr;
    std::size_t label = 0;
};

struct GradientSet {
    std::vector<double> d_filters;
    std::vector<double> d_biases;
    std::vector<double> d_head;
};

struct LossAndGrads {
    double loss = 0.0;
    GradientSet grads;
    // Examples whose true-class probability fell below the log floor.
    std::size_t clamped = 0;
};

inline constexpr double kLogFloor = 1e-12;

// Spatial side of conv_forward's output for side `a`.
std::size_t conv_output_side(std::size_t a, const BankGeometry& geometry);

FeatureMap conv_forward(const Patch& x, const ConvFeatureBank& bank);
FeatureMap relu(FeatureMap map);
FeatureMap maxpool(const FeatureMap& map, std::size_t kernel = kPoolKernel,
                   std::size_t stride = kPoolStride);
FeatureVector feature_forward(const Patch& x, const ConvFeatureBank& bank);

// Length of feature_forward's output for an a x a patch.
std::size_t feature_length(std::size_t a, const BankGeometry& geometry);

ProbVector softmax(std::span<const double> logits);
ProbVector classify(std::span<const double> y, const ClassifierHead& head);

// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> values);

// Mean negative log-likelihood over the batch together with its exact gradient.
// Frozen groups come back as zero vectors of the right shape.
LossAndGrads loss_and_grads(std::span<const LabeledPatchRef> batch, const ConvFeatureBank& bank,
                            const ClassifierHead& head, bool freeze_bank, bool freeze_head);

// Head-only variant over precomputed features; d_filters / d_biases stay empty.
LossAndGrads head_loss_and_grads(std::span<const FeatureVector* const> features,
                                 std::span<const std::size_t> labels, const ClassifierHead& head);

}  // namespace cgcnn
