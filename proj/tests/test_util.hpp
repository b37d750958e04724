#pragma once

// Test-only helpers: random fixtures and reference oracles that do not share code
// paths with the library implementations they check.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "cgcnn/nn.hpp"

namespace cgcnn::testing {

inline Tensor3 random_tensor(std::size_t rows, std::size_t cols, std::size_t ch, std::mt19937_64& rng,
                             double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor3 t(rows, cols, ch);
    for (double& v : t.data()) v = u(rng);
    return t;
}

inline ConvFeatureBank random_bank(const BankGeometry& g, std::mt19937_64& rng, double scale = 0.5) {
    ConvFeatureBank bank(g);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (double& v : bank.filters()) v = u(rng);
    for (double& v : bank.biases()) v = u(rng);
    return bank;
}

inline ClassifierHead random_head(std::size_t classes, std::size_t dim, std::mt19937_64& rng, double scale = 1.0) {
    ClassifierHead head(classes, dim);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (double& v : head.weights()) v = u(rng);
    return head;
}

// Direct-summation convolution: out[i][j][k] = bias_k + sum_{u,v,c} W[k][u][v][c] x[i*s+u][j*s+v][c].
inline Tensor3 conv_oracle(const Tensor3& x, const ConvFeatureBank& bank) {
    const std::size_t w = bank.kernel(), s = bank.stride();
    const std::size_t m = (x.rows() - w) / s + 1;
    Tensor3 out(m, m, bank.features());
    for (std::size_t k = 0; k < bank.features(); ++k)
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                double acc = bank.biases()[k];
                for (std::size_t u = 0; u < w; ++u)
                    for (std::size_t v = 0; v < w; ++v)
                        for (std::size_t c = 0; c < bank.channels(); ++c)
                            acc += bank.weight(k, u, v, c) * x(i * s + u, j * s + v, c);
                out(i, j, k) = acc;
            }
    return out;
}

inline Tensor3 relu_oracle(Tensor3 t) {
    for (double& v : t.data()) v = v > 0.0 ? v : 0.0;
    return t;
}

inline Tensor3 window_max_oracle(const Tensor3& t) {
    const std::size_t out = (t.rows() - 3) / 2 + 1;
    Tensor3 r(out, out, t.channels());
    for (std::size_t k = 0; k < t.channels(); ++k)
        for (std::size_t p = 0; p < out; ++p)
            for (std::size_t q = 0; q < out; ++q) {
                std::vector<double> window;
                for (std::size_t u = 0; u < 3; ++u)
                    for (std::size_t v = 0; v < 3; ++v) window.push_back(t(2 * p + u, 2 * q + v, k));
                r(p, q, k) = *std::max_element(window.begin(), window.end());
            }
    return r;
}

inline std::vector<double> naive_softmax(const std::vector<double>& logits) {
    double total = 0.0;
    for (double l : logits) total += std::exp(l);
    std::vector<double> z;
    for (double l : logits) z.push_back(std::exp(l) / total);
    return z;
}

// Mean NLL computed through the oracle chain (no clamping needed on these fixtures).
inline double loss_oracle(const std::vector<Tensor3>& xs, const std::vector<std::size_t>& labels,
                          const ConvFeatureBank& bank, const ClassifierHead& head) {
    double total = 0.0;
    for (std::size_t t = 0; t < xs.size(); ++t) {
        const Tensor3 pooled = window_max_oracle(relu_oracle(conv_oracle(xs[t], bank)));
        std::vector<double> logits(head.classes(), 0.0);
        for (std::size_t c = 0; c < head.classes(); ++c)
            for (std::size_t j = 0; j < pooled.size(); ++j) logits[c] += head.weights()[c * head.dim() + j] * pooled.data()[j];
        total += -std::log(naive_softmax(logits)[labels[t]]);
    }
    return total / static_cast<double>(xs.size());
}

inline bool close_relative(double analytic, double numeric, double rel = 1e-4, double abs_tol = 1e-8) {
    const double diff = std::abs(analytic - numeric);
    if (diff < abs_tol) return true;
    return diff / std::max(std::abs(analytic), std::abs(numeric)) < rel;
}

struct GradCheckStats {
    std::size_t checked = 0;
    std::size_t failures = 0;
    double worst_relative = 0.0;  // over coordinates with |gradient| > 1e-6
    double worst_absolute = 0.0;
};

// Compares loss_and_grads against central differences of loss_oracle for every parameter.
inline GradCheckStats finite_difference_check(const std::vector<Tensor3>& xs, const std::vector<std::size_t>& labels,
                                              ConvFeatureBank bank, ClassifierHead head, double eps = 1e-5) {
    std::vector<LabeledPatchRef> batch;
    for (std::size_t t = 0; t < xs.size(); ++t) batch.push_back({&xs[t], labels[t]});
    const LossAndGrads lg = loss_and_grads(batch, bank, head, false, false);
    GradCheckStats stats;
    auto check = [&](double& param, double analytic) {
        const double saved = param;
        param = saved + eps;
        const double up = loss_oracle(xs, labels, bank, head);
        param = saved - eps;
        const double down = loss_oracle(xs, labels, bank, head);
        param = saved;
        const double numeric = (up - down) / (2.0 * eps);
        ++stats.checked;
        const double diff = std::abs(analytic - numeric);
        const double scale = std::max(std::abs(analytic), std::abs(numeric));
        stats.worst_absolute = std::max(stats.worst_absolute, diff);
        if (scale > 1e-6) stats.worst_relative = std::max(stats.worst_relative, diff / scale);
        if (!close_relative(analytic, numeric)) ++stats.failures;
    };
    for (std::size_t i = 0; i < bank.filters().size(); ++i) check(bank.filters()[i], lg.grads.d_filters[i]);
    for (std::size_t i = 0; i < bank.biases().size(); ++i) check(bank.biases()[i], lg.grads.d_biases[i]);
    for (std::size_t i = 0; i < head.weights().size(); ++i) check(head.weights()[i], lg.grads.d_head[i]);
    return stats;
}

}  // namespace cgcnn::testing
