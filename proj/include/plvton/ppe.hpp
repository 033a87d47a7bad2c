#pragma once

// Person parsing estimation: a non-limb parsing prior built from the source parsing and the
// warped clothing mask, refined into the full target layout by an SE-gated encoder-decoder.

#include <array>

#include "plvton/blocks.hpp"

namespace plvton {

/// Per-class weights of the parsing cross-entropy.
struct ClassWeights {
    std::array<double, kNumParsingClasses> values = {1.0, 1.0, 1.0, 3.0, 3.0, 3.0, 1.0};

    torch::Tensor to_tensor(const torch::TensorOptions& options = {}) const;
};

struct PpeOptions {
    ClassWeights class_weights;
    double probability_floor = 1e-8;
    double mask_threshold = 0.5;
};

/// Removes clothing and arm classes from the source parsing (they become background) and
/// writes the binarized warped mask in as clothing. Works batched or unbatched.
torch::Tensor compose_nonlimb(const torch::Tensor& source_parsing, const torch::Tensor& warped_mask,
                              double threshold = 0.5);

/// 7-class logits from (P^t_nl, I_occ, P^s_occ, K, C_w).
class TargetParsingPredictorImpl : public torch::nn::Module {
public:
    TargetParsingPredictorImpl();
    torch::Tensor forward(const torch::Tensor& nonlimb_parsing, const torch::Tensor& occluded_person,
                          const torch::Tensor& occluded_parsing, const torch::Tensor& keypoints,
                          const torch::Tensor& warped_clothing);

private:
    torch::nn::Conv2d stem_{nullptr};
    SqueezeExcitation stem_se_{nullptr};
    std::vector<ResidualBlock> encoder_;
    std::vector<UpBlock> decoder_;
    torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(TargetParsingPredictor);

/// Softmax probabilities of the predictor (per-pixel simplex).
torch::Tensor predict_target_parsing(TargetParsingPredictor& predictor, const torch::Tensor& nonlimb_parsing,
                                     const torch::Tensor& occluded_person, const torch::Tensor& occluded_parsing,
                                     const torch::Tensor& keypoints, const torch::Tensor& warped_clothing);

/// -(1/n) sum_i sum_j w_j P^s_ij log max(P^t_ij, floor), n = samples x pixels.
torch::Tensor loss_ppe(const torch::Tensor& predicted, const torch::Tensor& target, const ClassWeights& weights = {},
                       double floor = 1e-8);

/// Same loss evaluated from logits through log-softmax (used for training).
torch::Tensor loss_ppe_from_logits(const torch::Tensor& logits, const torch::Tensor& target,
                                   const ClassWeights& weights = {});

/// Fraction of pixels whose argmax agrees between two parsing maps.
double parsing_accuracy(const torch::Tensor& predicted, const torch::Tensor& target);

}  // namespace plvton
