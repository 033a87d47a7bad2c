#pragma once

#include <filesystem>

#include "plvton/common.hpp"

namespace plvton::io {

/// Reads a colour image as a 3 x H x W float tensor in [0, 1] (RGB order).
/// When height/width are positive the image is resized bilinearly to that size.
torch::Tensor read_rgb(const std::filesystem::path& path, int64_t height = 0, int64_t width = 0);

/// Reads a single-channel mask as a binary 1 x H x W float tensor (threshold at half range).
torch::Tensor read_mask(const std::filesystem::path& path, int64_t height = 0, int64_t width = 0);

/// Reads a paletted or 8-bit grayscale PNG as raw H x W integer labels (int64).
/// Palette indices are returned as-is; no colour expansion takes place.
torch::Tensor read_label_png(const std::filesystem::path& path);

/// Writes a 3 x H x W (or 1 x H x W) tensor in [0, 1] as an 8-bit image; format from extension.
void write_rgb(const std::filesystem::path& path, const torch::Tensor& image);

/// Writes H x W labels in 0..6 as a paletted PNG using the parsing class palette.
void write_label_png(const std::filesystem::path& path, const torch::Tensor& labels);

/// Nearest-neighbour resize of an H x W label map.
torch::Tensor resize_labels(const torch::Tensor& labels, int64_t height, int64_t width);

}  // namespace plvton::io
