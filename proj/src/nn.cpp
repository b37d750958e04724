#include "cgcnn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "cgcnn/error.hpp"

namespace cgcnn {

namespace {

bool finite_range(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void check_patch(const Patch& x, const BankGeometry& g) {
    if (x.rows() != x.cols()) {
        std::ostringstream msg;
        msg << "patch must be square, got " << x.rows() << "x" << x.cols();
        throw InvalidInput(msg.str());
    }
    if (x.channels() != g.channels) {
        std::ostringstream msg;
        msg << "patch has " << x.channels() << " channels but bank expects " << g.channels;
        throw InvalidInput(msg.str());
    }
    if (x.rows() < g.kernel) {
        std::ostringstream msg;
        msg << "patch side " << x.rows() << " is smaller than kernel " << g.kernel;
        throw InvalidInput(msg.str());
    }
}

// Dot product over one w-row of the window: w*b contiguous values on both sides.
inline double row_dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

struct PoolRouting {
    FeatureVector pooled;
    // Flat index into the activation map that won each pooled entry.
    std::vector<std::size_t> source;
};

PoolRouting maxpool_with_routing(const FeatureMap& map) {
    const std::size_t m = map.rows();
    const std::size_t out = (m - kPoolKernel) / kPoolStride + 1;
    const std::size_t d = map.channels();
    PoolRouting r;
    r.pooled.resize(out * out * d);
    r.source.resize(out * out * d);
    const auto& data = map.data();
    for (std::size_t p = 0; p < out; ++p) {
        for (std::size_t q = 0; q < out; ++q) {
            for (std::size_t k = 0; k < d; ++k) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_idx = 0;
                for (std::size_t u = 0; u < kPoolKernel; ++u) {
                    for (std::size_t v = 0; v < kPoolKernel; ++v) {
                        const std::size_t idx = ((p * kPoolStride + u) * m + q * kPoolStride + v) * d + k;
                        if (data[idx] > best) {
                            best = data[idx];
                            best_idx = idx;
                        }
                    }
                }
                const std::size_t o = (p * out + q) * d + k;
                r.pooled[o] = best;
                r.source[o] = best_idx;
            }
        }
    }
    return r;
}

}  // namespace

bool Tensor3::all_finite() const { return finite_range(data_); }

ConvFeatureBank::ConvFeatureBank(const BankGeometry& geometry) : geometry_(geometry) {
    if (geometry.features == 0 || geometry.kernel == 0 || geometry.channels == 0 || geometry.stride == 0) {
        throw InvalidInput("bank geometry requires d, w, b, s >= 1");
    }
    filters_.assign(geometry.features * filter_size(), 0.0);
    biases_.assign(geometry.features, 0.0);
}

ConvFeatureBank ConvFeatureBank::random(const BankGeometry& geometry, Rng& rng) {
    ConvFeatureBank bank(geometry);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(bank.filter_size())));
    for (double& w : bank.filters_) w = normal(rng);
    return bank;
}

bool ConvFeatureBank::all_finite() const { return finite_range(filters_) && finite_range(biases_); }

ClassifierHead::ClassifierHead(std::size_t classes, std::size_t dim)
    : classes_(classes), dim_(dim), weights_(classes * dim, 0.0) {
    if (classes == 0 || dim == 0) throw InvalidInput("classifier head needs at least one class and one input");
}

ClassifierHead ClassifierHead::random(std::size_t classes, std::size_t dim, Rng& rng) {
    ClassifierHead head(classes, dim);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    for (double& w : head.weights_) w = normal(rng);
    return head;
}

std::size_t conv_output_side(std::size_t a, const BankGeometry& g) {
    if (a < g.kernel) throw InvalidInput("patch side smaller than kernel");
    return (a - g.kernel) / g.stride + 1;
}

std::size_t feature_length(std::size_t a, const BankGeometry& g) {
    const std::size_t m = conv_output_side(a, g);
    if (m < kPoolKernel) throw InvalidInput("convolution output smaller than the pooling window");
    const std::size_t out = (m - kPoolKernel) / kPoolStride + 1;
    return out * out * g.features;
}

FeatureMap conv_forward(const Patch& x, const ConvFeatureBank& bank) {
    const auto& g = bank.geometry();
    check_patch(x, g);
    const std::size_t a = x.rows();
    const std::size_t m = conv_output_side(a, g);
    const std::size_t w = g.kernel;
    const std::size_t b = g.channels;
    const std::size_t span = w * b;
    FeatureMap out(m, m, g.features);
    const double* xd = x.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t k = 0; k < g.features; ++k) {
                const double* f = bank.filters().data() + k * bank.filter_size();
                double acc = bank.biases()[k];
                for (std::size_t u = 0; u < w; ++u) {
                    const double* xrow = xd + ((i * g.stride + u) * a + j * g.stride) * b;
                    acc += row_dot(f + u * span, xrow, span);
                }
                out(i, j, k) = acc;
            }
        }
    }
    return out;
}

FeatureMap relu(FeatureMap map) {
    for (double& v : map.data()) v = std::max(v, 0.0);
    return map;
}

FeatureMap maxpool(const FeatureMap& map, std::size_t kernel, std::size_t stride) {
    if (map.rows() != map.cols()) throw InvalidInput("maxpool expects a square map");
    if (kernel == 0 || stride == 0) throw InvalidInput("maxpool kernel and stride must be positive");
    const std::size_t m = map.rows();
    if (m < kernel) {
        std::ostringstream msg;
        msg << "maxpool input side " << m << " is smaller than kernel " << kernel;
        throw InvalidInput(msg.str());
    }
    const std::size_t out = (m - kernel) / stride + 1;
    const std::size_t d = map.channels();
    FeatureMap pooled(out, out, d);
    for (std::size_t p = 0; p < out; ++p) {
        for (std::size_t q = 0; q < out; ++q) {
            for (std::size_t k = 0; k < d; ++k) {
                double best = -std::numeric_limits<double>::infinity();
                for (std::size_t u = 0; u < kernel; ++u) {
                    for (std::size_t v = 0; v < kernel; ++v) {
                        best = std::max(best, map(p * stride + u, q * stride + v, k));
                    }
                }
                pooled(p, q, k) = best;
            }
        }
    }
    return pooled;
}

FeatureVector feature_forward(const Patch& x, const ConvFeatureBank& bank) {
    FeatureMap pooled = maxpool(relu(conv_forward(x, bank)));
    return std::move(pooled.data());
}

ProbVector softmax(std::span<const double> logits) {
    if (logits.empty()) throw InvalidInput("softmax of an empty vector");
    if (!finite_range(logits)) throw NumericalError("non-finite logits");
    const double top = *std::max_element(logits.begin(), logits.end());
    ProbVector z(logits.size());
    double total = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        z[c] = std::exp(logits[c] - top);
        total += z[c];
    }
    for (double& v : z) v /= total;
    return z;
}

ProbVector classify(std::span<const double> y, const ClassifierHead& head) {
    if (y.size() != head.dim()) {
        std::ostringstream msg;
        msg << "feature length " << y.size() << " does not match head input " << head.dim();
        throw InvalidInput(msg.str());
    }
    std::vector<double> logits(head.classes());
    for (std::size_t c = 0; c < head.classes(); ++c) logits[c] = row_dot(head.row(c).data(), y.data(), y.size());
    return softmax(logits);
}

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) throw InvalidInput("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

namespace {

// Adds one example's contribution to loss and head gradient; returns d(loss)/d(logits).
std::vector<double> accumulate_head(std::span<const double> y, std::size_t label, const ClassifierHead& head,
                                    double scale, bool want_head_grad, LossAndGrads& out) {
    if (label >= head.classes()) throw InvalidInput("label outside the classifier's class range");
    const ProbVector z = classify(y, head);
    std::vector<double> dlogits(z.size(), 0.0);
    if (z[label] < kLogFloor) {
        // The clamped log is constant in the parameters here.
        out.loss += -std::log(kLogFloor) * scale;
        ++out.clamped;
        return dlogits;
    }
    out.loss += -std::log(z[label]) * scale;
    for (std::size_t c = 0; c < z.size(); ++c) dlogits[c] = (z[c] - (c == label ? 1.0 : 0.0)) * scale;
    if (want_head_grad) {
        const std::size_t d = head.dim();
        for (std::size_t c = 0; c < z.size(); ++c) {
            double* g = out.grads.d_head.data() + c * d;
            for (std::size_t j = 0; j < d; ++j) g[j] += dlogits[c] * y[j];
        }
    }
    return dlogits;
}

}  // namespace

LossAndGrads loss_and_grads(std::span<const LabeledPatchRef> batch, const ConvFeatureBank& bank,
                            const ClassifierHead& head, bool freeze_bank, bool freeze_head) {
    if (batch.empty()) throw InvalidInput("loss_and_grads needs a nonempty batch");
    LossAndGrads out;
    out.grads.d_filters.assign(bank.filters().size(), 0.0);
    out.grads.d_biases.assign(bank.biases().size(), 0.0);
    out.grads.d_head.assign(head.weights().size(), 0.0);

    const auto& g = bank.geometry();
    const double scale = 1.0 / static_cast<double>(batch.size());
    const std::size_t w = g.kernel;
    const std::size_t b = g.channels;
    const std::size_t span = w * b;

    for (const auto& item : batch) {
        const Patch& x = *item.patch;
        const FeatureMap pre = conv_forward(x, bank);
        if (pre.rows() < kPoolKernel) throw InvalidInput("convolution output smaller than the pooling window");
        const PoolRouting routed = maxpool_with_routing(relu(pre));
        const std::vector<double> dlogits =
            accumulate_head(routed.pooled, item.label, head, scale, !freeze_head, out);
        if (freeze_bank) continue;

        // dL/dy = V^T dlogits, routed to the argmax of each pooling window.
        const std::size_t dim = head.dim();
        std::vector<double> dpre(pre.size(), 0.0);
        for (std::size_t j = 0; j < dim; ++j) {
            double dy = 0.0;
            for (std::size_t c = 0; c < head.classes(); ++c) dy += dlogits[c] * head.weights()[c * dim + j];
            dpre[routed.source[j]] += dy;
        }
        const auto& pre_data = pre.data();
        for (std::size_t idx = 0; idx < dpre.size(); ++idx) {
            if (pre_data[idx] <= 0.0) dpre[idx] = 0.0;
        }

        const std::size_t m = pre.rows();
        const std::size_t a = x.rows();
        const double* xd = x.data().data();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t jj = 0; jj < m; ++jj) {
                for (std::size_t k = 0; k < g.features; ++k) {
                    const double delta = dpre[(i * m + jj) * g.features + k];
                    if (delta == 0.0) continue;
                    out.grads.d_biases[k] += delta;
                    double* gf = out.grads.d_filters.data() + k * bank.filter_size();
                    for (std::size_t u = 0; u < w; ++u) {
                        const double* xrow = xd + ((i * g.stride + u) * a + jj * g.stride) * b;
                        double* grow = gf + u * span;
                        for (std::size_t e = 0; e < span; ++e) grow[e] += delta * xrow[e];
                    }
                }
            }
        }
    }
    if (!std::isfinite(out.loss)) throw NumericalError("non-finite loss");
    return out;
}

LossAndGrads head_loss_and_grads(std::span<const FeatureVector* const> features, std::span<const std::size_t> labels,
                                 const ClassifierHead& head) {
    if (features.empty()) throw InvalidInput("head_loss_and_grads needs a nonempty batch");
    if (features.size() != labels.size()) throw InvalidInput("feature and label counts differ");
    LossAndGrads out;
    out.grads.d_head.assign(head.weights().size(), 0.0);
    const double scale = 1.0 / static_cast<double>(features.size());
    for (std::size_t t = 0; t < features.size(); ++t) {
        accumulate_head(*features[t], labels[t], head, scale, true, out);
    }
    if (!std::isfinite(out.loss)) throw NumericalError("non-finite loss");
    return out;
}

}  // namespace cgcnn
