#include "cgcnn/filter_grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "cgcnn/error.hpp"

namespace cgcnn {

namespace {

void write_png(const FilterGridImage& grid, const std::filesystem::path& path) {
    cv::Mat mat(static_cast<int>(grid.height), static_cast<int>(grid.width), grid.channels == 3 ? CV_8UC3 : CV_8UC1);
    for (std::size_t r = 0; r < grid.height; ++r) {
        auto* row = mat.ptr<std::uint8_t>(static_cast<int>(r));
        for (std::size_t c = 0; c < grid.width; ++c) {
            const std::size_t src = (r * grid.width + c) * grid.channels;
            if (grid.channels == 3) {
                row[3 * c + 0] = grid.pixels[src + 2];
                row[3 * c + 1] = grid.pixels[src + 1];
                row[3 * c + 2] = grid.pixels[src + 0];
            } else {
                row[c] = grid.pixels[src];
            }
        }
    }
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), mat);
    } catch (const cv::Exception&) {
        ok = false;
    }
    if (!ok) throw IoError("cannot write filter grid to " + path.string());
}

}  // namespace

std::size_t filter_grid_columns(std::size_t features) {
    if (features == 64) return 8;
    return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(features))));
}

FilterGridImage render_filter_grid(const ConvFeatureBank& bank, std::size_t band) {
    const std::size_t d = bank.features();
    const std::size_t w = bank.kernel();
    const std::size_t b = bank.channels();
    const bool rgb = b == 3;
    if (!rgb && b != 1 && band >= b) throw InvalidInput("band index outside the bank's channels");

    FilterGridImage grid;
    grid.channels = rgb ? 3 : 1;
    grid.grid_cols = filter_grid_columns(d);
    grid.grid_rows = (d + grid.grid_cols - 1) / grid.grid_cols;
    grid.tile = w;
    grid.width = grid.grid_cols * w + (grid.grid_cols - 1);
    grid.height = grid.grid_rows * w + (grid.grid_rows - 1);
    grid.pixels.assign(grid.width * grid.height * grid.channels, 0);

    for (std::size_t k = 0; k < d; ++k) {
        const auto filter = bank.filter(k);
        const auto [lo_it, hi_it] = std::minmax_element(filter.begin(), filter.end());
        const double lo = *lo_it;
        const double hi = *hi_it;
        grid.filter_min.push_back(lo);
        grid.filter_max.push_back(hi);
        auto level = [&](double v) -> std::uint8_t {
            if (hi == lo) return 128;
            return static_cast<std::uint8_t>(std::lround(255.0 * (v - lo) / (hi - lo)));
        };
        const std::size_t r0 = grid.tile_origin_row(k);
        const std::size_t c0 = grid.tile_origin_col(k);
        for (std::size_t r = 0; r < w; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
                std::uint8_t* px = grid.pixels.data() + ((r0 + r) * grid.width + c0 + c) * grid.channels;
                if (rgb) {
                    for (std::size_t ch = 0; ch < 3; ++ch) px[ch] = level(bank.weight(k, r, c, ch));
                } else {
                    px[0] = level(bank.weight(k, r, c, b == 1 ? 0 : band));
                }
            }
        }
    }
    return grid;
}

std::vector<FilterGridImage> export_filter_grid(const ConvFeatureBank& bank, const std::filesystem::path& path) {
    std::vector<FilterGridImage> grids;
    const std::size_t b = bank.channels();
    if (b == 1 || b == 3) {
        grids.push_back(render_filter_grid(bank));
        write_png(grids.back(), path);
        return grids;
    }
    for (std::size_t band = 0; band < b; ++band) {
        grids.push_back(render_filter_grid(bank, band));
        char suffix[32];
        std::snprintf(suffix, sizeof suffix, "_band%03zu", band + 1);
        auto target = path.parent_path() / (path.stem().string() + suffix + path.extension().string());
        write_png(grids.back(), target);
    }
    return grids;
}

}  // namespace cgcnn
