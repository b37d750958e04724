#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cgcnn {

enum class OptimizerKind { Sgd, Adam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

struct OptimizerSettings {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double momentum = 0.0;  // SGD only
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Per-parameter-group optimizer memory. Accumulators are sized on the first step.
struct OptimizerState {
    OptimizerSettings settings;
    std::vector<double> first_moment;   // SGD velocity or Adam m
    std::vector<double> second_moment;  // Adam v
    std::uint64_t step = 0;

    OptimizerState() = default;
    explicit OptimizerState(const OptimizerSettings& s) : settings(s) {}
};

// One update of `params` in place. Throws NumericalError on a non-finite gradient
// without touching params or state.
void optimizer_step(std::span<double> params, std::span<const double> grads, OptimizerState& state);

}  // namespace cgcnn
