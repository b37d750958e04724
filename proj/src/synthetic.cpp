#include "cgcnn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace cgcnn::synthetic {

namespace {

struct Grating {
    double row = 0.0, col = 0.0;  // Voronoi site
    double angle = 0.0;
    double period = 6.0;
    double phase = 0.0;
    double color_a[3] = {0, 0, 0};
    double color_b[3] = {1, 1, 1};
};

}  // namespace

ImageStore oriented_bar_images(std::size_t count, std::size_t rows, std::size_t cols, std::size_t cells_per_image,
                               std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.02);
    ImageStore store;
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<Grating> cells(std::max<std::size_t>(cells_per_image, 1));
        for (auto& g : cells) {
            g.row = unit(rng) * static_cast<double>(rows);
            g.col = unit(rng) * static_cast<double>(cols);
            g.angle = std::floor(unit(rng) * 4.0) * std::numbers::pi / 4.0;
            g.period = 4.0 + 8.0 * unit(rng);
            g.phase = unit(rng) * 2.0 * std::numbers::pi;
            for (int ch = 0; ch < 3; ++ch) {
                g.color_a[ch] = unit(rng);
                g.color_b[ch] = unit(rng);
            }
        }
        Tensor3 image(rows, cols, 3);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                const Grating* nearest = &cells.front();
                double best = std::numeric_limits<double>::infinity();
                for (const auto& g : cells) {
                    const double d = std::hypot(g.row - static_cast<double>(r), g.col - static_cast<double>(c));
                    if (d < best) {
                        best = d;
                        nearest = &g;
                    }
                }
                const double along = std::cos(nearest->angle) * static_cast<double>(c) +
                                     std::sin(nearest->angle) * static_cast<double>(r);
                const double mix = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * along / nearest->period + nearest->phase);
                for (std::size_t ch = 0; ch < 3; ++ch) {
                    const double v = mix * nearest->color_a[ch] + (1.0 - mix) * nearest->color_b[ch] + noise(rng);
                    image(r, c, ch) = std::clamp(v, 0.0, 1.0);
                }
            }
        }
        store.images.push_back(std::move(image));
        store.ids.push_back("synthetic_" + std::to_string(i));
    }
    return store;
}

std::vector<Tensor3> textures(std::size_t classes, std::size_t side, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Tensor3> out;
    for (std::size_t k = 0; k < classes; ++k) {
        const double angle = std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes);
        const double period = 3.0 + static_cast<double>(k % 5) * 2.5;
        const double contrast = 0.25 + 0.5 * unit(rng);
        const double grain = 0.05 + 0.25 * static_cast<double>(k % 3) / 2.0;
        const double mean = 0.3 + 0.4 * unit(rng);
        std::normal_distribution<double> noise(0.0, grain);
        Tensor3 img(side, side, 1);
        for (std::size_t r = 0; r < side; ++r) {
            for (std::size_t c = 0; c < side; ++c) {
                const double along = std::cos(angle) * static_cast<double>(c) + std::sin(angle) * static_cast<double>(r);
                const double wave = std::sin(2.0 * std::numbers::pi * along / period);
                img(r, c, 0) = std::clamp(mean + contrast * 0.5 * wave + noise(rng), 0.0, 1.0);
            }
        }
        out.push_back(std::move(img));
    }
    return out;
}

HsiCube hsi_scene(std::size_t rows, std::size_t cols, std::size_t bands, std::size_t classes, double noise,
                  std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Smooth signatures: sums of a few broad Gaussian bumps over the band axis.
    std::vector<std::vector<double>> signatures(classes, std::vector<double>(bands));
    for (auto& sig : signatures) {
        const double offset = 0.2 + 0.6 * unit(rng);
        for (int bump = 0; bump < 3; ++bump) {
            const double centre = unit(rng) * static_cast<double>(bands);
            const double width = 0.05 * static_cast<double>(bands) + 0.15 * static_cast<double>(bands) * unit(rng);
            const double height = 0.6 * (unit(rng) - 0.3);
            for (std::size_t k = 0; k < bands; ++k) {
                const double z = (static_cast<double>(k) - centre) / width;
                sig[k] += height * std::exp(-0.5 * z * z);
            }
        }
        for (double& v : sig) v += offset;
    }

    HsiCube scene;
    scene.cube = Tensor3(rows, cols, bands);
    scene.labels.rows = rows;
    scene.labels.cols = cols;
    scene.labels.values.assign(rows * cols, 0);
    scene.class_count = classes;
    for (std::size_t c = 0; c < classes; ++c) scene.class_names.push_back("material_" + std::to_string(c + 1));

    // Fields are a grid of blocks, class chosen per block, with a 1-pixel unlabeled border.
    const std::size_t block = 8;
    const std::size_t grid_r = (rows + block - 1) / block;
    const std::size_t grid_c = (cols + block - 1) / block;
    std::vector<std::size_t> block_class(grid_r * grid_c);
    for (std::size_t i = 0; i < block_class.size(); ++i) block_class[i] = i % classes;
    std::shuffle(block_class.begin(), block_class.end(), rng);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t cls = block_class[(r / block) * grid_c + c / block];
            const bool border = r == 0 || c == 0 || r + 1 == rows || c + 1 == cols;
            scene.labels.values[r * cols + c] = border ? 0 : static_cast<std::uint16_t>(cls + 1);
            const double brightness = 1.0 + 0.1 * gauss(rng);
            for (std::size_t k = 0; k < bands; ++k) {
                scene.cube(r, c, k) = 1000.0 * (signatures[cls][k] * brightness + noise * gauss(rng));
            }
        }
    }
    return scene;
}

}  // namespace cgcnn::synthetic
