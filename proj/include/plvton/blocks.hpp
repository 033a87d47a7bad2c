#pragma once

// Small convolutional building blocks shared by the three stage networks.

#include "plvton/common.hpp"

namespace plvton {

torch::nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride = 1, bool bias = true);
torch::nn::Conv2d conv1x1(int64_t in, int64_t out, bool bias = true);

inline torch::Tensor lrelu(const torch::Tensor& x) { return torch::leaky_relu(x, 0.2); }

/// Bilinear resize of a feature map to the spatial size of `like`.
torch::Tensor upsample_to(const torch::Tensor& x, const torch::Tensor& like);

/// Channel squeeze-and-excitation: global pool -> bottleneck MLP -> sigmoid channel gates.
class SqueezeExcitationImpl : public torch::nn::Module {
public:
    SqueezeExcitationImpl(int64_t channels, int64_t reduction = 4);
    torch::Tensor forward(const torch::Tensor& x);
    /// Per-channel gates in (0, 1), shape N x C x 1 x 1.
    torch::Tensor gates(const torch::Tensor& x);

private:
    torch::nn::Linear squeeze_{nullptr}, excite_{nullptr};
};
TORCH_MODULE(SqueezeExcitation);

/// Two 3x3 convolutions with an identity (or 1x1 projection) shortcut, ResNet basic-block style.
/// An optional squeeze-and-excitation block follows each convolution.
class ResidualBlockImpl : public torch::nn::Module {
public:
    ResidualBlockImpl(int64_t in, int64_t out, int64_t stride = 1, bool squeeze_excite = false);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, shortcut_{nullptr};
    SqueezeExcitation se1_{nullptr}, se2_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Decoder step: upsample to the skip resolution, concatenate the skip, fuse with a residual block.
class UpBlockImpl : public torch::nn::Module {
public:
    UpBlockImpl(int64_t in, int64_t skip, int64_t out, bool squeeze_excite = false);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& skip);

private:
    ResidualBlock fuse_{nullptr};
};
TORCH_MODULE(UpBlock);

}  // namespace plvton
