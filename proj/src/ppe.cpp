#include "plvton/ppe.hpp"

namespace plvton {

namespace F = torch::nn::functional;

torch::Tensor ClassWeights::to_tensor(const torch::TensorOptions& options) const {
    std::vector<double> v(values.begin(), values.end());
    return torch::tensor(v, torch::kFloat64).to(options);
}

torch::Tensor compose_nonlimb(const torch::Tensor& source_parsing, const torch::Tensor& warped_mask,
                              double threshold) {
    const int64_t rank = source_parsing.dim();
    const auto parsing = as_batch(source_parsing);
    const auto mask = as_batch(warped_mask);
    require(parsing.size(1) == kNumParsingClasses, "parsing map must have 7 channels");
    require(mask.size(1) == 1 && mask.size(0) == parsing.size(0) && mask.sizes().slice(2) == parsing.sizes().slice(2),
            "warped mask must be 1 x H x W and match the parsing map");

    auto labels = parsing.argmax(1);
    const auto removed = (labels == class_index(ParsingClass::UpperClothes)) |
                         (labels == class_index(ParsingClass::LeftArm)) |
                         (labels == class_index(ParsingClass::RightArm));
    labels = torch::where(removed, torch::full({}, class_index(ParsingClass::Background), labels.options()), labels);
    const auto clothing = mask.squeeze(1) >= threshold;
    labels = torch::where(clothing, torch::full({}, class_index(ParsingClass::UpperClothes), labels.options()), labels);
    auto out = F::one_hot(labels, kNumParsingClasses).permute({0, 3, 1, 2}).to(parsing.scalar_type());
    return restore_rank(out.contiguous(), rank);
}

TargetParsingPredictorImpl::TargetParsingPredictorImpl() {
    const int64_t in = kNumParsingClasses + 3 + kNumParsingClasses + kNumKeypoints + 3;
    stem_ = register_module("stem", conv3x3(in, 16));
    stem_se_ = register_module("stem_se", SqueezeExcitation(16));
    const std::array<int64_t, 5> widths = {16, 32, 48, 64, 64};
    for (size_t i = 0; i + 1 < widths.size(); ++i) {
        encoder_.push_back(
            register_module("enc" + std::to_string(i), ResidualBlock(widths[i], widths[i + 1], 2, true)));
    }
    for (size_t i = widths.size() - 1; i > 0; --i) {
        decoder_.push_back(register_module("dec" + std::to_string(widths.size() - 1 - i),
                                           UpBlock(widths[i], widths[i - 1], widths[i - 1], true)));
    }
    head_ = register_module("head", conv1x1(16, kNumParsingClasses));
}

torch::Tensor TargetParsingPredictorImpl::forward(const torch::Tensor& nonlimb_parsing,
                                                  const torch::Tensor& occluded_person,
                                                  const torch::Tensor& occluded_parsing, const torch::Tensor& keypoints,
                                                  const torch::Tensor& warped_clothing) {
    auto x = torch::cat({nonlimb_parsing, occluded_person, occluded_parsing, keypoints, warped_clothing}, 1);
    x = stem_se_->forward(lrelu(stem_->forward(x)));
    std::vector<torch::Tensor> skips = {x};
    for (auto& block : encoder_) {
        x = block->forward(x);
        skips.push_back(x);
    }
    for (size_t i = 0; i < decoder_.size(); ++i) x = decoder_[i]->forward(x, skips[skips.size() - 2 - i]);
    return head_->forward(x);
}

torch::Tensor predict_target_parsing(TargetParsingPredictor& predictor, const torch::Tensor& nonlimb_parsing,
                                     const torch::Tensor& occluded_person, const torch::Tensor& occluded_parsing,
                                     const torch::Tensor& keypoints, const torch::Tensor& warped_clothing) {
    return torch::softmax(
        predictor->forward(nonlimb_parsing, occluded_person, occluded_parsing, keypoints, warped_clothing), 1);
}

torch::Tensor loss_ppe(const torch::Tensor& predicted, const torch::Tensor& target, const ClassWeights& weights,
                       double floor) {
    require(predicted.sizes() == target.sizes(), "prediction and target parsing must share a shape");
    const auto p = as_batch(predicted);
    const auto t = as_batch(target);
    require(p.size(1) == kNumParsingClasses, "parsing maps must have 7 channels");
    const auto w = weights.to_tensor(p.options()).view({1, kNumParsingClasses, 1, 1});
    const double n = static_cast<double>(p.size(0) * p.size(2) * p.size(3));
    return -(w * t * torch::log(p.clamp_min(floor))).sum() / n;
}

torch::Tensor loss_ppe_from_logits(const torch::Tensor& logits, const torch::Tensor& target,
                                   const ClassWeights& weights) {
    require(logits.sizes() == target.sizes(), "logits and target parsing must share a shape");
    require(logits.dim() == 4 && logits.size(1) == kNumParsingClasses, "expected N x 7 x H x W logits");
    const auto w = weights.to_tensor(logits.options()).view({1, kNumParsingClasses, 1, 1});
    const double n = static_cast<double>(logits.size(0) * logits.size(2) * logits.size(3));
    return -(w * target * torch::log_softmax(logits, 1)).sum() / n;
}

double parsing_accuracy(const torch::Tensor& predicted, const torch::Tensor& target) {
    require(predicted.sizes() == target.sizes(), "parsing maps must share a shape");
    const int64_t channel_dim = predicted.dim() - 3;
    return (predicted.argmax(channel_dim) == target.argmax(channel_dim)).to(torch::kFloat64).mean().item<double>();
}

}  // namespace plvton
