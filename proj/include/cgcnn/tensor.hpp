#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cgcnn {

// Dense rows x cols x channels array of doubles, channel-fastest layout.
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(std::size_t rows, std::size_t cols, std::size_t channels, double fill = 0.0)
        : rows_(rows), cols_(cols), channels_(channels), data_(rows * cols * channels, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c, std::size_t ch) {
        return data_[(r * cols_ + c) * channels_ + ch];
    }
    double operator()(std::size_t r, std::size_t c, std::size_t ch) const {
        return data_[(r * cols_ + c) * channels_ + ch];
    }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool all_finite() const;

    friend bool operator==(const Tensor3&, const Tensor3&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::size_t channels_ = 0;
    std::vector<double> data_;
};

// An a x a x b input window.
using Patch = Tensor3;

// Pre-activation / activation maps produced by the convolution.
using FeatureMap = Tensor3;

// Post-ReLU, post-maxpool response flattened in (row, col, feature) order.
using FeatureVector = std::vector<double>;

}  // namespace cgcnn
