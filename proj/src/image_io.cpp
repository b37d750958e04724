#include "cgcnn/image_io.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "cgcnn/error.hpp"

namespace cgcnn {

namespace {

std::uint8_t to_level(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

double level_scale(int depth) { return depth == CV_16U ? 65535.0 : 255.0; }

}  // namespace

Tensor3 try_read_rgb(const std::filesystem::path& path) {
    cv::Mat mat;
    try {
        mat = cv::imread(path.string(), cv::IMREAD_COLOR);
    } catch (const cv::Exception&) {
        return {};
    }
    if (mat.empty() || mat.channels() != 3) return {};
    const double scale = level_scale(mat.depth());
    Tensor3 out(static_cast<std::size_t>(mat.rows), static_cast<std::size_t>(mat.cols), 3);
    for (int r = 0; r < mat.rows; ++r) {
        for (int c = 0; c < mat.cols; ++c) {
            const auto px = mat.at<cv::Vec3b>(r, c);
            // OpenCV decodes as BGR.
            out(r, c, 0) = px[2] / scale;
            out(r, c, 1) = px[1] / scale;
            out(r, c, 2) = px[0] / scale;
        }
    }
    return out;
}

Tensor3 read_gray(const std::filesystem::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (mat.empty()) throw IoError("cannot decode image " + path.string());
    const double scale = level_scale(mat.depth());
    if (mat.depth() != CV_8U && mat.depth() != CV_16U) throw IoError("unsupported pixel depth in " + path.string());
    cv::Mat as_double;
    mat.convertTo(as_double, CV_64F, 1.0 / scale);
    Tensor3 out(static_cast<std::size_t>(mat.rows), static_cast<std::size_t>(mat.cols), 1);
    const int ch = as_double.channels();
    for (int r = 0; r < mat.rows; ++r) {
        const double* row = as_double.ptr<double>(r);
        for (int c = 0; c < mat.cols; ++c) {
            const double* px = row + c * ch;
            if (ch == 1 || ch == 2) {
                out(r, c, 0) = px[0];
            } else {
                out(r, c, 0) = 0.299 * px[2] + 0.587 * px[1] + 0.114 * px[0];
            }
        }
    }
    return out;
}

void write_rgb_png(const Tensor3& image, const std::filesystem::path& path) {
    if (image.channels() != 3) throw InvalidInput("write_rgb_png expects 3 channels");
    cv::Mat mat(static_cast<int>(image.rows()), static_cast<int>(image.cols()), CV_8UC3);
    for (std::size_t r = 0; r < image.rows(); ++r) {
        for (std::size_t c = 0; c < image.cols(); ++c) {
            mat.at<cv::Vec3b>(static_cast<int>(r), static_cast<int>(c)) =
                cv::Vec3b(to_level(image(r, c, 2)), to_level(image(r, c, 1)), to_level(image(r, c, 0)));
        }
    }
    if (!cv::imwrite(path.string(), mat)) throw IoError("cannot write " + path.string());
}

void write_gray_png(const Tensor3& image, const std::filesystem::path& path) {
    if (image.channels() != 1) throw InvalidInput("write_gray_png expects 1 channel");
    cv::Mat mat(static_cast<int>(image.rows()), static_cast<int>(image.cols()), CV_8UC1);
    for (std::size_t r = 0; r < image.rows(); ++r) {
        for (std::size_t c = 0; c < image.cols(); ++c) {
            mat.at<std::uint8_t>(static_cast<int>(r), static_cast<int>(c)) = to_level(image(r, c, 0));
        }
    }
    if (!cv::imwrite(path.string(), mat)) throw IoError("cannot write " + path.string());
}

LabelRaster read_label_raster(const std::filesystem::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (mat.empty()) throw IoError("cannot decode label raster " + path.string());
    if (mat.channels() != 1 || (mat.depth() != CV_8U && mat.depth() != CV_16U)) {
        throw IoError("label raster must be single-channel 8- or 16-bit: " + path.string());
    }
    LabelRaster raster;
    raster.rows = static_cast<std::size_t>(mat.rows);
    raster.cols = static_cast<std::size_t>(mat.cols);
    raster.values.resize(raster.rows * raster.cols);
    for (int r = 0; r < mat.rows; ++r) {
        for (int c = 0; c < mat.cols; ++c) {
            raster.values[static_cast<std::size_t>(r) * raster.cols + static_cast<std::size_t>(c)] =
                mat.depth() == CV_8U ? mat.at<std::uint8_t>(r, c) : mat.at<std::uint16_t>(r, c);
        }
    }
    return raster;
}

void write_label_raster(const LabelRaster& raster, const std::filesystem::path& path) {
    const bool wide = std::any_of(raster.values.begin(), raster.values.end(), [](auto v) { return v > 255; });
    cv::Mat mat(static_cast<int>(raster.rows), static_cast<int>(raster.cols), wide ? CV_16UC1 : CV_8UC1);
    for (std::size_t r = 0; r < raster.rows; ++r) {
        for (std::size_t c = 0; c < raster.cols; ++c) {
            const auto v = raster(r, c);
            if (wide) {
                mat.at<std::uint16_t>(static_cast<int>(r), static_cast<int>(c)) = v;
            } else {
                mat.at<std::uint8_t>(static_cast<int>(r), static_cast<int>(c)) = static_cast<std::uint8_t>(v);
            }
        }
    }
    if (!cv::imwrite(path.string(), mat)) throw IoError("cannot write " + path.string());
}

}  // namespace cgcnn
