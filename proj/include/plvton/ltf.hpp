#pragma once

// Limb-aware texture fusion: a coarse fusion of the warped clothing with the occluded person,
// then a refinement guided by spatially shuffled limb patches.

#include "plvton/blocks.hpp"
#include "plvton/metrics.hpp"

namespace plvton {

struct LtfLossWeights {
    double image = 1.0;
    double perceptual = 2.0;
    double edge = 0.4;
};

struct LtfOptions {
    int64_t patch_scale = 8;
    LtfLossWeights loss;
    StageWeights stage_weights = kDefaultStageWeights;
};

/// Person pixels under the arm classes of the (argmax of the) target parsing; zero elsewhere.
torch::Tensor extract_limb_map(const torch::Tensor& person, const torch::Tensor& target_parsing);

/// Patchifies every colour channel of the limb map: 3 x H x W -> 3s^2 x H/s x W/s.
torch::Tensor limb_guidance(const torch::Tensor& limb_map, int64_t scale = 8);

/// Residual U-Net producing I_c in [0, 1] from (C_w, I_occ, P^t, K).
class CoarseFusionNetImpl : public torch::nn::Module {
public:
    CoarseFusionNetImpl();
    torch::Tensor forward(const torch::Tensor& warped_clothing, const torch::Tensor& occluded_person,
                          const torch::Tensor& target_parsing, const torch::Tensor& keypoints);

private:
    torch::nn::Conv2d stem_{nullptr};
    std::vector<ResidualBlock> encoder_;
    std::vector<UpBlock> decoder_;
    torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(CoarseFusionNet);

/// Combines limb-patch features with main-stream features: the limb features are scaled by
/// (1 + cos) / 2, cos being the per-pixel cosine similarity of the two streams, and the result
/// is concatenated to the main stream and fused.
class FeatureCorrelationImpl : public torch::nn::Module {
public:
    explicit FeatureCorrelationImpl(int64_t channels);
    torch::Tensor forward(const torch::Tensor& main, const torch::Tensor& limb);
    /// Gate map in [0, 1], N x 1 x h x w.
    static torch::Tensor correlation_gate(const torch::Tensor& main, const torch::Tensor& limb);

private:
    ResidualBlock fuse_{nullptr};
};
TORCH_MODULE(FeatureCorrelation);

/// U-shaped refinement network producing I_f in [0, 1] from (L_p, K, I_occ, P^t, I_c).
/// The output is a residual on the logit of I_c; the head starts at zero so I_f = I_c initially.
class FineFusionNetImpl : public torch::nn::Module {
public:
    explicit FineFusionNetImpl(int64_t patch_scale = 8);
    torch::Tensor forward(const torch::Tensor& limb_patches, const torch::Tensor& keypoints,
                          const torch::Tensor& occluded_person, const torch::Tensor& target_parsing,
                          const torch::Tensor& coarse);

private:
    torch::nn::Conv2d stem_{nullptr};
    std::vector<ResidualBlock> encoder_;
    torch::nn::Conv2d limb_in_{nullptr};
    ResidualBlock limb_block_{nullptr};
    FeatureCorrelation correlation_{nullptr};
    std::vector<UpBlock> decoder_;
    torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(FineFusionNet);

struct LtfOutputs {
    torch::Tensor coarse;        // I_c
    torch::Tensor fine;          // I_f
    torch::Tensor limb_map;      // L
    torch::Tensor limb_patches;  // L_p
};

class TextureFusionImpl : public torch::nn::Module {
public:
    explicit TextureFusionImpl(const LtfOptions& options = {});

    /// Runs both stages. `person` supplies the limb textures; when `zero_limb_patches` is set the
    /// guidance is replaced by zeros (ablation probe).
    LtfOutputs forward(const torch::Tensor& warped_clothing, const torch::Tensor& occluded_person,
                       const torch::Tensor& target_parsing, const torch::Tensor& keypoints,
                       const torch::Tensor& person, bool zero_limb_patches = false);

    int64_t patch_scale() const { return patch_scale_; }

    CoarseFusionNet coarse{nullptr};
    FineFusionNet fine{nullptr};

private:
    int64_t patch_scale_;
};
TORCH_MODULE(TextureFusion);

struct LtfLossTerms {
    torch::Tensor coarse;
    torch::Tensor fine;
    torch::Tensor total;
};

/// Single-stage loss: image L1 + perceptual + Sobel edge L1, all mean-reduced.
torch::Tensor ltf_stage_loss(const torch::Tensor& output, const torch::Tensor& target, PerceptualBackbone& backbone,
                             const LtfOptions& options = {});

/// L_c + L_f.
LtfLossTerms loss_ltf(const torch::Tensor& coarse, const torch::Tensor& fine, const torch::Tensor& target,
                      PerceptualBackbone& backbone, const LtfOptions& options = {});

}  // namespace plvton
