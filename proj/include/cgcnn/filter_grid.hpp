#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cgcnn/nn.hpp"

namespace cgcnn {

// One rendered grid of filter tiles, 8-bit, row-major, channel-fastest.
struct FilterGridImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;  // 3 for RGB banks, 1 otherwise
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;
    std::size_t tile = 0;      // w
    std::vector<std::uint8_t> pixels;
    // Per-filter affine normalization: level = 255 * (v - min) / (max - min).
    std::vector<double> filter_min;
    std::vector<double> filter_max;

    std::size_t tile_origin_row(std::size_t k) const { return (k / grid_cols) * (tile + 1); }
    std::size_t tile_origin_col(std::size_t k) const { return (k % grid_cols) * (tile + 1); }
};

// 8 columns for d=64, ceil(sqrt(d)) otherwise.
std::size_t filter_grid_columns(std::size_t features);

// Renders channel group `band` (ignored for b=1 and b=3 banks) as a grid with
// 1-pixel black separators between tiles. Constant filters render as level 128.
FilterGridImage render_filter_grid(const ConvFeatureBank& bank, std::size_t band = 0);

// Writes filters.png for b in {1,3}; for b>3 writes one grayscale grid per band as
// <stem>_band<k><ext>. Returns the rendered grids in file order.
std::vector<FilterGridImage> export_filter_grid(const ConvFeatureBank& bank, const std::filesystem::path& path);

}  // namespace cgcnn
