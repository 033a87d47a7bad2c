#include "plvton/blocks.hpp"

namespace plvton {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride, bool bias) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(bias));
}

nn::Conv2d conv1x1(int64_t in, int64_t out, bool bias) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, 1).bias(bias));
}

torch::Tensor upsample_to(const torch::Tensor& x, const torch::Tensor& like) {
    if (x.size(2) == like.size(2) && x.size(3) == like.size(3)) return x;
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{like.size(2), like.size(3)})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
}

SqueezeExcitationImpl::SqueezeExcitationImpl(int64_t channels, int64_t reduction) {
    const int64_t hidden = std::max<int64_t>(channels / reduction, 4);
    squeeze_ = register_module("squeeze", nn::Linear(channels, hidden));
    excite_ = register_module("excite", nn::Linear(hidden, channels));
}

torch::Tensor SqueezeExcitationImpl::gates(const torch::Tensor& x) {
    auto pooled = x.mean({2, 3});
    auto g = torch::sigmoid(excite_->forward(torch::relu(squeeze_->forward(pooled))));
    return g.unsqueeze(-1).unsqueeze(-1);
}

torch::Tensor SqueezeExcitationImpl::forward(const torch::Tensor& x) { return x * gates(x); }

ResidualBlockImpl::ResidualBlockImpl(int64_t in, int64_t out, int64_t stride, bool squeeze_excite) {
    conv1_ = register_module("conv1", conv3x3(in, out, stride));
    conv2_ = register_module("conv2", conv3x3(out, out));
    if (stride != 1 || in != out) {
        shortcut_ = register_module(
            "shortcut", nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)));
    }
    if (squeeze_excite) {
        se1_ = register_module("se1", SqueezeExcitation(out));
        se2_ = register_module("se2", SqueezeExcitation(out));
    }
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
    auto y = lrelu(conv1_->forward(x));
    if (se1_) y = se1_->forward(y);
    y = conv2_->forward(y);
    if (se2_) y = se2_->forward(y);
    const auto skip = shortcut_ ? shortcut_->forward(x) : x;
    return lrelu(y + skip);
}

UpBlockImpl::UpBlockImpl(int64_t in, int64_t skip, int64_t out, bool squeeze_excite) {
    fuse_ = register_module("fuse", ResidualBlock(in + skip, out, 1, squeeze_excite));
}

torch::Tensor UpBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& skip) {
    return fuse_->forward(torch::cat({upsample_to(x, skip), skip}, 1));
}

}  // namespace plvton
