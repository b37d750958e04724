#include "cgcnn/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "cgcnn/error.hpp"

namespace cgcnn {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_kind_from_string(const std::string& name) {
    if (name == "sgd" || name == "SGD") return OptimizerKind::Sgd;
    if (name == "adam" || name == "Adam") return OptimizerKind::Adam;
    throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

void optimizer_step(std::span<double> params, std::span<const double> grads, OptimizerState& state) {
    if (params.size() != grads.size()) throw InvalidInput("parameter and gradient sizes differ");
    if (!std::all_of(grads.begin(), grads.end(), [](double g) { return std::isfinite(g); })) {
        throw NumericalError("non-finite gradient; optimizer step rejected");
    }
    if (state.first_moment.empty() && state.step == 0) {
        state.first_moment.assign(params.size(), 0.0);
        if (state.settings.kind == OptimizerKind::Adam) state.second_moment.assign(params.size(), 0.0);
    }
    if (state.first_moment.size() != params.size()) throw InvalidInput("optimizer state shape mismatch");

    const auto& s = state.settings;
    ++state.step;
    if (s.kind == OptimizerKind::Sgd) {
        if (s.momentum == 0.0) {
            for (std::size_t i = 0; i < params.size(); ++i) params[i] -= s.learning_rate * grads[i];
            return;
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.first_moment[i] = s.momentum * state.first_moment[i] + grads[i];
            params[i] -= s.learning_rate * state.first_moment[i];
        }
        return;
    }

    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(s.beta1, t);
    const double correction2 = 1.0 - std::pow(s.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = s.beta1 * m + (1.0 - s.beta1) * grads[i];
        v = s.beta2 * v + (1.0 - s.beta2) * grads[i] * grads[i];
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        params[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
    }
}

}  // namespace cgcnn
