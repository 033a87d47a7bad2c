#include "plvton/geowarp.hpp"

#include <cmath>

namespace plvton {

namespace F = torch::nn::functional;

AffineParams AffineParams::pixel_shift(double dx, double dy, int64_t height, int64_t width) {
    // Output pixel j samples source pixel j - dx, i.e. content moves by +dx.
    return {1.0, 1.0, -2.0 * dx / static_cast<double>(width), -2.0 * dy / static_cast<double>(height)};
}

torch::Tensor AffineParams::to_tensor() const {
    return torch::tensor({scale_x, scale_y, shift_x, shift_y}, torch::kFloat64).unsqueeze(0);
}

torch::Tensor bilinear_sample(const torch::Tensor& image, const torch::Tensor& x,
                              const torch::Tensor& y, double fill) {
    require(image.dim() == 4, "bilinear_sample expects an N x C x H x W image");
    require(x.dim() == 3 && x.sizes() == y.sizes(), "sample coordinates must be N x h x w");
    require(x.size(0) == image.size(0), "batch size mismatch between image and coordinates");

    const int64_t n = image.size(0);
    const int64_t c = image.size(1);
    const int64_t h = image.size(2);
    const int64_t w = image.size(3);
    const int64_t out_h = x.size(1);
    const int64_t out_w = x.size(2);

    const auto x0 = torch::floor(x).detach();
    const auto y0 = torch::floor(y).detach();
    const auto wx1 = x - x0;
    const auto wy1 = y - y0;
    const auto wx0 = 1.0 - wx1;
    const auto wy0 = 1.0 - wy1;

    const auto flat = image.reshape({n, c, h * w});
    auto corner = [&](const torch::Tensor& cx, const torch::Tensor& cy) {
        const auto inside = (cx >= 0) & (cx <= w - 1) & (cy >= 0) & (cy <= h - 1);
        const auto ix = cx.clamp(0, w - 1).to(torch::kLong);
        const auto iy = cy.clamp(0, h - 1).to(torch::kLong);
        const auto idx = (iy * w + ix).reshape({n, 1, out_h * out_w}).expand({n, c, out_h * out_w});
        const auto values = flat.gather(2, idx).reshape({n, c, out_h, out_w});
        const auto valid = inside.unsqueeze(1).to(image.scalar_type());
        return values * valid + fill * (1.0 - valid);
    };

    const auto x1 = x0 + 1;
    const auto y1 = y0 + 1;
    return corner(x0, y0) * (wx0 * wy0).unsqueeze(1) + corner(x1, y0) * (wx1 * wy0).unsqueeze(1) +
           corner(x0, y1) * (wx0 * wy1).unsqueeze(1) + corner(x1, y1) * (wx1 * wy1).unsqueeze(1);
}

torch::Tensor affine_apply(const torch::Tensor& image, const torch::Tensor& params, double fill) {
    const int64_t rank = image.dim();
    const auto batch = as_batch(image);
    const int64_t n = batch.size(0);
    const int64_t h = batch.size(2);
    const int64_t w = batch.size(3);
    require(params.dim() == 2 && params.size(1) == 4, "affine params must be N x 4");
    require(params.size(0) == n || params.size(0) == 1, "affine params batch mismatch");
    require(torch::isfinite(params).all().item<bool>(), "affine params must be finite");

    const auto opts = batch.options();
    const auto p = params.to(opts.dtype()).expand({n, 4});
    // pixel-centre normalized coordinates of the output grid
    const auto gx = torch::arange(w, opts).view({1, 1, w}).expand({n, h, w});
    const auto gy = torch::arange(h, opts).view({1, h, 1}).expand({n, h, w});

    const auto a1 = p.select(1, 0).view({n, 1, 1});
    const auto a2 = p.select(1, 1).view({n, 1, 1});
    const auto b1 = p.select(1, 2).view({n, 1, 1});
    const auto b2 = p.select(1, 3).view({n, 1, 1});
    // ((a x_n + b + 1) W - 1) / 2 with x_n = (2j + 1) / W - 1, rearranged so the identity is exact
    const auto src_x = a1 * gx + 0.5 * (a1 - 1.0) * (1.0 - static_cast<double>(w)) + 0.5 * b1 * static_cast<double>(w);
    const auto src_y = a2 * gy + 0.5 * (a2 - 1.0) * (1.0 - static_cast<double>(h)) + 0.5 * b2 * static_cast<double>(h);

    return restore_rank(bilinear_sample(batch, src_x, src_y, fill), rank);
}

torch::Tensor affine_apply(const torch::Tensor& image, const AffineParams& params, double fill) {
    require(std::isfinite(params.scale_x) && std::isfinite(params.scale_y) &&
                std::isfinite(params.shift_x) && std::isfinite(params.shift_y),
            "affine params must be finite");
    return affine_apply(image, params.to_tensor().to(image.device()), fill);
}

torch::Tensor flow_warp(const torch::Tensor& image, const torch::Tensor& flow, double fill) {
    const int64_t rank = image.dim();
    const auto batch = as_batch(image);
    const auto f = as_batch(flow);
    require(f.size(1) == 2, "flow must have 2 channels");
    require(f.size(2) == batch.size(2) && f.size(3) == batch.size(3),
            "flow resolution must equal image resolution");
    require(f.size(0) == batch.size(0), "flow batch size must equal image batch size");

    const int64_t n = batch.size(0);
    const int64_t h = batch.size(2);
    const int64_t w = batch.size(3);
    const auto opts = batch.options();
    const auto gx = torch::arange(w, opts).view({1, 1, w}).expand({n, h, w});
    const auto gy = torch::arange(h, opts).view({1, h, 1}).expand({n, h, w});
    const auto src_x = gx + f.select(1, 0);
    const auto src_y = gy + f.select(1, 1);
    return restore_rank(bilinear_sample(batch, src_x, src_y, fill), rank);
}

torch::Tensor resize_flow(const torch::Tensor& flow, int64_t height, int64_t width) {
    require(height >= 1 && width >= 1, "resize target must be at least 1 x 1");
    const int64_t rank = flow.dim();
    const auto f = as_batch(flow);
    require(f.size(1) == 2, "flow must have 2 channels");
    const int64_t h = f.size(2);
    const int64_t w = f.size(3);
    if (h == height && w == width) return flow;

    auto resized = F::interpolate(
        f, F::InterpolateFuncOptions()
               .size(std::vector<int64_t>{height, width})
               .mode(torch::kBilinear)
               .align_corners(false));
    const auto gain = torch::tensor({static_cast<double>(width) / static_cast<double>(w),
                                     static_cast<double>(height) / static_cast<double>(h)},
                                    f.options())
                          .view({1, 2, 1, 1});
    return restore_rank(resized * gain, rank);
}

torch::Tensor patchify(const torch::Tensor& x, int64_t scale) {
    require(scale >= 1, "patch scale must be positive");
    const int64_t rank = x.dim();
    const auto b = as_batch(x);
    const int64_t n = b.size(0);
    const int64_t c = b.size(1);
    const int64_t h = b.size(2);
    const int64_t w = b.size(3);
    require(h % scale == 0 && w % scale == 0,
            "patch scale " + std::to_string(scale) + " must divide both height " + std::to_string(h) +
                " and width " + std::to_string(w));
    const int64_t ph = h / scale;
    const int64_t pw = w / scale;
    auto out = b.reshape({n, c, scale, ph, scale, pw})
                   .permute({0, 1, 2, 4, 3, 5})
                   .reshape({n, c * scale * scale, ph, pw});
    return restore_rank(out, rank);
}

torch::Tensor unpatch(const torch::Tensor& patches, int64_t scale) {
    require(scale >= 1, "patch scale must be positive");
    const int64_t rank = patches.dim();
    const auto b = as_batch(patches);
    const int64_t n = b.size(0);
    const int64_t cs = b.size(1);
    require(cs % (scale * scale) == 0, "channel count must be a multiple of scale^2");
    const int64_t c = cs / (scale * scale);
    const int64_t ph = b.size(2);
    const int64_t pw = b.size(3);
    auto out = b.reshape({n, c, scale, scale, ph, pw})
                   .permute({0, 1, 2, 4, 3, 5})
                   .reshape({n, c, scale * ph, scale * pw});
    return restore_rank(out, rank);
}

torch::Tensor sobel_gradients(const torch::Tensor& image) {
    const int64_t rank = image.dim();
    const auto b = as_batch(image);
    const int64_t c = b.size(1);
    const auto opts = b.options();
    const auto kx = torch::tensor({-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0}, opts).view({3, 3});
    const auto ky = kx.t().contiguous();
    const auto kernel = torch::stack({kx, ky}).unsqueeze(1).repeat({c, 1, 1, 1});  // 2C x 1 x 3 x 3
    const auto padded = F::pad(b, F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReplicate));
    auto out = F::conv2d(padded, kernel, F::Conv2dFuncOptions().groups(c));
    return restore_rank(out, rank);
}

}  // namespace plvton
