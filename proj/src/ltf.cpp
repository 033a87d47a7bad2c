#include "plvton/ltf.hpp"

#include "plvton/geowarp.hpp"

namespace plvton {

namespace F = torch::nn::functional;

torch::Tensor extract_limb_map(const torch::Tensor& person, const torch::Tensor& target_parsing) {
    const int64_t rank = person.dim();
    const auto p = as_batch(person);
    const auto t = as_batch(target_parsing);
    require(t.size(1) == kNumParsingClasses, "target parsing must have 7 channels");
    require(p.size(0) == t.size(0) && p.sizes().slice(2) == t.sizes().slice(2),
            "person and target parsing must share batch and H x W");
    const auto labels = t.argmax(1, true);
    const auto arms = (labels == class_index(ParsingClass::LeftArm)) | (labels == class_index(ParsingClass::RightArm));
    return restore_rank(p * arms.to(p.scalar_type()), rank);
}

torch::Tensor limb_guidance(const torch::Tensor& limb_map, int64_t scale) {
    require(limb_map.dim() >= 3 && limb_map.size(-3) == 3, "limb map must have 3 channels");
    return patchify(limb_map, scale);
}

// ---------------------------------------------------------------------------

namespace {
constexpr std::array<int64_t, 5> kFusionWidths = {16, 32, 48, 64, 64};
}

CoarseFusionNetImpl::CoarseFusionNetImpl() {
    const int64_t in = 3 + 3 + kNumParsingClasses + kNumKeypoints;
    stem_ = register_module("stem", conv3x3(in, kFusionWidths[0]));
    for (size_t i = 0; i + 1 < kFusionWidths.size(); ++i) {
        encoder_.push_back(register_module("enc" + std::to_string(i),
                                           ResidualBlock(kFusionWidths[i], kFusionWidths[i + 1], 2)));
    }
    for (size_t i = kFusionWidths.size() - 1; i > 0; --i) {
        decoder_.push_back(register_module("dec" + std::to_string(kFusionWidths.size() - 1 - i),
                                           UpBlock(kFusionWidths[i], kFusionWidths[i - 1], kFusionWidths[i - 1])));
    }
    head_ = register_module("head", conv3x3(kFusionWidths[0], 3));
}

torch::Tensor CoarseFusionNetImpl::forward(const torch::Tensor& warped_clothing, const torch::Tensor& occluded_person,
                                           const torch::Tensor& target_parsing, const torch::Tensor& keypoints) {
    auto x = lrelu(stem_->forward(torch::cat({warped_clothing, occluded_person, target_parsing, keypoints}, 1)));
    std::vector<torch::Tensor> skips = {x};
    for (auto& block : encoder_) {
        x = block->forward(x);
        skips.push_back(x);
    }
    for (size_t i = 0; i < decoder_.size(); ++i) x = decoder_[i]->forward(x, skips[skips.size() - 2 - i]);
    return torch::sigmoid(head_->forward(x));
}

// ---------------------------------------------------------------------------

FeatureCorrelationImpl::FeatureCorrelationImpl(int64_t channels) {
    fuse_ = register_module("fuse", ResidualBlock(2 * channels, channels));
}

torch::Tensor FeatureCorrelationImpl::correlation_gate(const torch::Tensor& main, const torch::Tensor& limb) {
    const auto cos = F::cosine_similarity(main, limb, F::CosineSimilarityFuncOptions().dim(1).eps(1e-6));
    return ((1.0 + cos) * 0.5).unsqueeze(1);
}

torch::Tensor FeatureCorrelationImpl::forward(const torch::Tensor& main, const torch::Tensor& limb) {
    require(main.sizes() == limb.sizes(), "correlated feature maps must share a shape");
    return fuse_->forward(torch::cat({main, limb * correlation_gate(main, limb)}, 1));
}

FineFusionNetImpl::FineFusionNetImpl(int64_t patch_scale) {
    require(patch_scale >= 1, "patch scale must be positive");
    const int64_t in = kNumKeypoints + 3 + kNumParsingClasses + 3;
    stem_ = register_module("stem", conv3x3(in, kFusionWidths[0]));
    // main stream down to 1/8
    for (size_t i = 0; i < 3; ++i) {
        encoder_.push_back(register_module("enc" + std::to_string(i),
                                           ResidualBlock(kFusionWidths[i], kFusionWidths[i + 1], 2)));
    }
    const int64_t bottleneck = kFusionWidths[3];
    limb_in_ = register_module("limb_in", conv3x3(3 * patch_scale * patch_scale, bottleneck));
    limb_block_ = register_module("limb_block", ResidualBlock(bottleneck, bottleneck));
    correlation_ = register_module("correlation", FeatureCorrelation(bottleneck));
    for (size_t i = 3; i > 0; --i) {
        decoder_.push_back(register_module("dec" + std::to_string(3 - i),
                                           UpBlock(kFusionWidths[i], kFusionWidths[i - 1], kFusionWidths[i - 1])));
    }
    head_ = register_module("head", conv3x3(kFusionWidths[0], 3));
    torch::NoGradGuard guard;
    head_->weight.zero_();
    head_->bias.zero_();
}

torch::Tensor FineFusionNetImpl::forward(const torch::Tensor& limb_patches, const torch::Tensor& keypoints,
                                         const torch::Tensor& occluded_person, const torch::Tensor& target_parsing,
                                         const torch::Tensor& coarse) {
    auto x = lrelu(stem_->forward(torch::cat({keypoints, occluded_person, target_parsing, coarse}, 1)));
    std::vector<torch::Tensor> skips = {x};
    for (auto& block : encoder_) {
        x = block->forward(x);
        skips.push_back(x);
    }
    auto limb = limb_block_->forward(lrelu(limb_in_->forward(limb_patches)));
    limb = upsample_to(limb, x);
    x = correlation_->forward(x, limb);
    for (size_t i = 0; i < decoder_.size(); ++i) x = decoder_[i]->forward(x, skips[skips.size() - 2 - i]);
    const auto base = torch::logit(coarse.clamp(1e-3, 1.0 - 1e-3));
    return torch::sigmoid(base + head_->forward(x));
}

// ---------------------------------------------------------------------------

TextureFusionImpl::TextureFusionImpl(const LtfOptions& options) : patch_scale_(options.patch_scale) {
    coarse = register_module("coarse", CoarseFusionNet());
    fine = register_module("fine", FineFusionNet(options.patch_scale));
}

LtfOutputs TextureFusionImpl::forward(const torch::Tensor& warped_clothing, const torch::Tensor& occluded_person,
                                      const torch::Tensor& target_parsing, const torch::Tensor& keypoints,
                                      const torch::Tensor& person, bool zero_limb_patches) {
    require(warped_clothing.dim() == 4, "LTF expects batched inputs");
    const auto hw = warped_clothing.sizes().slice(2);
    for (const auto* t : {&occluded_person, &target_parsing, &keypoints, &person}) {
        require(t->dim() == 4 && t->sizes().slice(2) == hw, "LTF inputs must share H x W");
    }
    LtfOutputs out;
    out.coarse = coarse->forward(warped_clothing, occluded_person, target_parsing, keypoints);
    out.limb_map = extract_limb_map(person, target_parsing);
    out.limb_patches = limb_guidance(out.limb_map, patch_scale_);
    const auto guidance = zero_limb_patches ? torch::zeros_like(out.limb_patches) : out.limb_patches;
    out.fine = fine->forward(guidance, keypoints, occluded_person, target_parsing, out.coarse);
    return out;
}

// ---------------------------------------------------------------------------

torch::Tensor ltf_stage_loss(const torch::Tensor& output, const torch::Tensor& target, PerceptualBackbone& backbone,
                             const LtfOptions& options) {
    require(output.sizes() == target.sizes(), "LTF loss needs equal shapes");
    const auto& w = options.loss;
    auto loss = w.image * (output - target).abs().mean();
    if (w.perceptual != 0.0) loss = loss + w.perceptual * perceptual_distance(backbone, output, target, options.stage_weights);
    if (w.edge != 0.0) loss = loss + w.edge * (sobel_gradients(output) - sobel_gradients(target)).abs().mean();
    return loss;
}

LtfLossTerms loss_ltf(const torch::Tensor& coarse, const torch::Tensor& fine, const torch::Tensor& target,
                      PerceptualBackbone& backbone, const LtfOptions& options) {
    LtfLossTerms terms;
    terms.coarse = ltf_stage_loss(coarse, target, backbone, options);
    terms.fine = ltf_stage_loss(fine, target, backbone, options);
    terms.total = terms.coarse + terms.fine;
    return terms;
}

}  // namespace plvton
