#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cgcnn/tensor.hpp"

namespace cgcnn {

// Decodes a PNG/JPEG into an H x W x 3 RGB tensor with values in [0,1].
// Returns an empty tensor when the file cannot be decoded.
Tensor3 try_read_rgb(const std::filesystem::path& path);

// Single-channel image in [0,1]; color inputs are reduced with BT.601 luma.
Tensor3 read_gray(const std::filesystem::path& path);

// 8-bit PNG writers. Values are clipped to [0,1] and rounded to the nearest level.
void write_rgb_png(const Tensor3& image, const std::filesystem::path& path);
void write_gray_png(const Tensor3& image, const std::filesystem::path& path);

struct LabelRaster {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint16_t> values;  // row-major

    std::uint16_t operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

// 8- or 16-bit single-channel PNG/PGM of class indices.
LabelRaster read_label_raster(const std::filesystem::path& path);
void write_label_raster(const LabelRaster& raster, const std::filesystem::path& path);

}  // namespace cgcnn
