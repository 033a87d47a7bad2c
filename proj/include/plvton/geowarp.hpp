#pragma once

// Differentiable geometric primitives shared by the warping, parsing and fusion stages.
//
// Conventions:
//  * Images are C x H x W or N x C x H x W float tensors; outputs keep the input rank.
//  * Flows are 2-channel displacement fields in pixel units of their own resolution;
//    channel 0 is horizontal, channel 1 vertical. Warping is backward (gather):
//    out(i, j) = in(i + flow_y(i, j), j + flow_x(i, j)).
//  * Affine parameters act on normalized coordinates with pixel-centre convention,
//    x_n = (2j + 1) / W - 1, so the matrix [[a1, 0, b1], [0, a2, b2]] maps an output
//    location to the location it samples from.
//  * Samples that fall outside the source read a constant fill value.

#include <cstdint>

#include "plvton/common.hpp"

namespace plvton {

/// Scale (a1, a2) and translation (b1, b2) of the pre-alignment transform.
struct AffineParams {
    double scale_x = 1.0;
    double scale_y = 1.0;
    double shift_x = 0.0;
    double shift_y = 0.0;

    static AffineParams identity() { return {}; }

    /// Translation that moves content by whole pixels for an image of the given size.
    static AffineParams pixel_shift(double dx, double dy, int64_t height, int64_t width);

    /// Packs the parameters as a 1 x 4 float64 tensor [a1, a2, b1, b2].
    torch::Tensor to_tensor() const;
};

/// Bilinear gather from image (N x C x H x W) at pixel coordinates x, y (N x h x w each).
/// The image is treated as extended by `fill` outside its bounds.
torch::Tensor bilinear_sample(const torch::Tensor& image, const torch::Tensor& x,
                              const torch::Tensor& y, double fill);

/// Applies affine parameters (N x 4 tensor [a1, a2, b1, b2]) to an image.
torch::Tensor affine_apply(const torch::Tensor& image, const torch::Tensor& params, double fill);
torch::Tensor affine_apply(const torch::Tensor& image, const AffineParams& params, double fill);

/// Backward-warps image by a flow of the same resolution.
torch::Tensor flow_warp(const torch::Tensor& image, const torch::Tensor& flow, double fill);

/// Bilinear resize of a flow with displacements rescaled into target-resolution pixels.
torch::Tensor resize_flow(const torch::Tensor& flow, int64_t height, int64_t width);

/// Splits every channel into an s x s grid of (H/s) x (W/s) patches stacked along the
/// channel axis in row-major patch order: C x H x W -> (C*s*s) x (H/s) x (W/s).
torch::Tensor patchify(const torch::Tensor& x, int64_t scale);

/// Inverse of patchify.
torch::Tensor unpatch(const torch::Tensor& patches, int64_t scale);

/// 3x3 Sobel responses with replicate padding: C channels -> 2C channels ordered
/// (d/dx of channel 0, d/dy of channel 0, d/dx of channel 1, ...).
torch::Tensor sobel_gradients(const torch::Tensor& image);

}  // namespace plvton
