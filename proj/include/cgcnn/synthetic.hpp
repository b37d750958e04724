#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cgcnn/sampler.hpp"
#include "cgcnn/tensor.hpp"

namespace cgcnn::synthetic {

// RGB images tiled by Voronoi cells, each cell a colored oriented grating with its own
// orientation, period and color pair, plus mild pixel noise.
ImageStore oriented_bar_images(std::size_t count, std::size_t rows, std::size_t cols, std::size_t cells_per_image,
                               std::uint64_t seed);

// Single-channel textures in [0,1], one generator setting per class.
std::vector<Tensor3> textures(std::size_t classes, std::size_t side, std::uint64_t seed);

// Blocky label map with `classes` spectral signatures plus noise; label 0 marks a
// background border.
HsiCube hsi_scene(std::size_t rows, std::size_t cols, std::size_t bands, std::size_t classes, double noise,
                  std::uint64_t seed);

}  // namespace cgcnn::synthetic
