#include "plvton/image_io.hpp"

#include <array>
#include <cstdio>
#include <memory>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <png.h>

namespace plvton::io {

namespace {

using FilePtr = std::unique_ptr<std::FILE, int (*)(std::FILE*)>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr fp(std::fopen(path.c_str(), mode), &std::fclose);
    if (!fp) throw std::runtime_error("cannot open " + path.string());
    return fp;
}

constexpr std::array<std::array<uint8_t, 3>, kNumParsingClasses> kPalette = {{
    {0, 0, 0},        // background
    {128, 0, 0},      // hair
    {0, 128, 0},      // face
    {255, 85, 0},     // upper clothes
    {0, 0, 255},      // left arm
    {51, 170, 221},   // right arm
    {85, 85, 0},      // lower body / rest
}};

cv::Mat read_or_throw(const std::filesystem::path& path, int flags) {
    cv::Mat img = cv::imread(path.string(), flags);
    if (img.empty()) throw std::runtime_error("cannot read image " + path.string());
    return img;
}

}  // namespace

torch::Tensor read_rgb(const std::filesystem::path& path, int64_t height, int64_t width) {
    cv::Mat bgr = read_or_throw(path, cv::IMREAD_COLOR);
    if (height > 0 && width > 0 && (bgr.rows != height || bgr.cols != width)) {
        cv::resize(bgr, bgr, cv::Size(static_cast<int>(width), static_cast<int>(height)), 0, 0,
                   cv::INTER_LINEAR);
    }
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
    return t.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

torch::Tensor read_mask(const std::filesystem::path& path, int64_t height, int64_t width) {
    cv::Mat gray = read_or_throw(path, cv::IMREAD_GRAYSCALE);
    if (height > 0 && width > 0 && (gray.rows != height || gray.cols != width)) {
        cv::resize(gray, gray, cv::Size(static_cast<int>(width), static_cast<int>(height)), 0, 0,
                   cv::INTER_NEAREST);
    }
    auto t = torch::from_blob(gray.data, {1, gray.rows, gray.cols}, torch::kUInt8).clone();
    return (t >= 128).to(torch::kFloat32);
}

torch::Tensor read_label_png(const std::filesystem::path& path) {
    auto fp = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("malformed PNG " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const auto color_type = png_get_color_type(png, info);
    const auto bit_depth = png_get_bit_depth(png, info);
    if (color_type != PNG_COLOR_TYPE_PALETTE && color_type != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InvalidInput("label PNG must be paletted or grayscale: " + path.string());
    }
    if (bit_depth < 8) png_set_packing(png);
    if (bit_depth == 16) png_set_strip_16(png);
    png_read_update_info(png, info);

    const auto width = png_get_image_width(png, info);
    const auto height = png_get_image_height(png, info);
    std::vector<uint8_t> buffer(static_cast<size_t>(width) * height);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 r = 0; r < height; ++r) rows[r] = buffer.data() + static_cast<size_t>(r) * width;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    return torch::from_blob(buffer.data(), {static_cast<int64_t>(height), static_cast<int64_t>(width)},
                            torch::kUInt8)
        .to(torch::kLong);
}

void write_rgb(const std::filesystem::path& path, const torch::Tensor& image) {
    require(image.dim() == 3 && (image.size(0) == 3 || image.size(0) == 1),
            "write_rgb expects a 3 x H x W or 1 x H x W tensor");
    auto t = image.detach().to(torch::kCPU, torch::kFloat32).clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8);
    if (t.size(0) == 1) t = t.expand({3, t.size(1), t.size(2)});
    t = t.permute({1, 2, 0}).contiguous();
    cv::Mat rgb(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC3, t.data_ptr<uint8_t>());
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), bgr)) throw std::runtime_error("cannot write image " + path.string());
}

void write_label_png(const std::filesystem::path& path, const torch::Tensor& labels) {
    require(labels.dim() == 2, "write_label_png expects an H x W label tensor");
    auto t = labels.detach().to(torch::kCPU).to(torch::kLong);
    require(t.numel() == 0 || (t.min().item<int64_t>() >= 0 && t.max().item<int64_t>() < kNumParsingClasses),
            "labels must lie in 0..6");
    t = t.to(torch::kUInt8).contiguous();
    const auto height = static_cast<png_uint_32>(t.size(0));
    const auto width = static_cast<png_uint_32>(t.size(1));

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto fp = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("cannot write PNG " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    std::array<png_color, kNumParsingClasses> palette{};
    for (size_t i = 0; i < palette.size(); ++i) palette[i] = {kPalette[i][0], kPalette[i][1], kPalette[i][2]};
    png_set_PLTE(png, info, palette.data(), static_cast<int>(palette.size()));
    png_write_info(png, info);
    auto* data = t.data_ptr<uint8_t>();
    for (png_uint_32 r = 0; r < height; ++r) png_write_row(png, data + static_cast<size_t>(r) * width);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

torch::Tensor resize_labels(const torch::Tensor& labels, int64_t height, int64_t width) {
    require(labels.dim() == 2, "resize_labels expects an H x W tensor");
    if (labels.size(0) == height && labels.size(1) == width) return labels;
    const auto rows = (torch::arange(height, torch::kDouble) + 0.5) * (static_cast<double>(labels.size(0)) / height);
    const auto cols = (torch::arange(width, torch::kDouble) + 0.5) * (static_cast<double>(labels.size(1)) / width);
    const auto ri = rows.floor().clamp_max(labels.size(0) - 1).to(torch::kLong);
    const auto ci = cols.floor().clamp_max(labels.size(1) - 1).to(torch::kLong);
    return labels.index_select(0, ri).index_select(1, ci);
}

}  // namespace plvton::io
