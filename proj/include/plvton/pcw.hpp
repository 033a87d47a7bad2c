#pragma once

// Progressive clothing warping: an affine pre-alignment (scale + translation) of the shop
// clothing followed by a multi-scale appearance-flow predictor whose per-scale sub-flows
// are fused by a convolutional GRU.

#include <array>
#include <vector>

#include "plvton/blocks.hpp"
#include "plvton/dataio.hpp"
#include "plvton/metrics.hpp"

namespace plvton {

inline constexpr int kNumSubFlows = 5;

struct PcwLossWeights {
    double gravity = 1.0;
    double perceptual = 8.0;
    double tv = 0.1;
};

struct PcwOptions {
    int64_t gru_hidden = 8;
    std::array<int64_t, kNumSubFlows> encoder_channels = {16, 32, 48, 64, 64};
    double tv_epsilon = 1e-6;
    double gravity_floor = 0.0;  // weight reached at the hem
    PcwLossWeights loss;
    StageWeights stage_weights = kDefaultStageWeights;
};

/// Regresses affine parameters N x 4 = [a1, a2, b1, b2] from (C, M, P^s_occ, K).
/// Scale heads emit log-scales and translation heads emit shifts; both final layers start
/// at zero so an untrained network produces the identity transform.
class PreAlignNetImpl : public torch::nn::Module {
public:
    PreAlignNetImpl();
    torch::Tensor forward(const torch::Tensor& clothing, const torch::Tensor& clothing_mask,
                          const torch::Tensor& occluded_parsing, const torch::Tensor& keypoints);

private:
    std::vector<torch::nn::Conv2d> trunk_;
    torch::nn::Linear scale_hidden_{nullptr}, scale_out_{nullptr};
    torch::nn::Linear shift_hidden_{nullptr}, shift_out_{nullptr};
};
TORCH_MODULE(PreAlignNet);

/// Convolutional GRU cell:
///   r = sigmoid(W_fr f + W_hr h),  z = sigmoid(W_fz f + W_hz h)
///   h~ = tanh(W_fh f + W_hh (r * h)),  h' = (1 - z) * h + z * h~
/// The W_f* convolutions carry the biases; the W_h* convolutions are bias-free.
class ConvGruCellImpl : public torch::nn::Module {
public:
    ConvGruCellImpl(int64_t input_channels, int64_t hidden_channels, int64_t kernel = 3);
    torch::Tensor forward(const torch::Tensor& input, const torch::Tensor& hidden);

    int64_t hidden_channels() const { return hidden_; }

    torch::nn::Conv2d w_fr{nullptr}, w_hr{nullptr}, w_fz{nullptr}, w_hz{nullptr}, w_fh{nullptr}, w_hh{nullptr};

private:
    int64_t input_;
    int64_t hidden_;
};
TORCH_MODULE(ConvGruCell);

/// One recurrence step of the aggregator; shapes must agree.
torch::Tensor gru_step(ConvGruCell& cell, const torch::Tensor& subflow, const torch::Tensor& previous);

struct FlowPrediction {
    std::vector<torch::Tensor> subflows;  // coarse to fine, each in pixels of its own resolution
    torch::Tensor flow;                   // aggregated flow at input resolution
};

class FlowPredictorImpl : public torch::nn::Module {
public:
    explicit FlowPredictorImpl(const PcwOptions& options = {});

    /// Encodes (C_a, K, P^s_occ, I_occ) and returns sub-flows plus the aggregated flow.
    FlowPrediction forward(const torch::Tensor& prealigned_clothing, const torch::Tensor& keypoints,
                           const torch::Tensor& occluded_parsing, const torch::Tensor& occluded_person);

    /// Resizes every sub-flow to (height, width) and runs the GRU from a zero state.
    torch::Tensor aggregate_hidden(const std::vector<torch::Tensor>& subflows, int64_t height, int64_t width);

    /// Full aggregation: GRU at quarter resolution, decoder, then resize to (height, width).
    torch::Tensor aggregate(const std::vector<torch::Tensor>& subflows, int64_t height, int64_t width);

    ConvGruCell& gru() { return gru_; }

private:
    std::vector<ResidualBlock> encoder_;
    std::vector<torch::nn::Conv2d> heads_;
    ConvGruCell gru_{nullptr};
    std::vector<torch::nn::Conv2d> decoder_;
};
TORCH_MODULE(FlowPredictor);

/// Quarter-resolution grid the sub-flows are aggregated on.
std::pair<int64_t, int64_t> aggregation_size(int64_t height, int64_t width);

struct PcwOutputs {
    torch::Tensor params;               // N x 4
    torch::Tensor prealigned_clothing;  // C_a
    torch::Tensor prealigned_mask;      // M_a
    std::vector<torch::Tensor> subflows;
    torch::Tensor flow;            // f_a
    torch::Tensor warped_clothing;  // C_w, zero outside the warped mask
    torch::Tensor warped_mask;      // M_w
};

class ProgressiveWarpImpl : public torch::nn::Module {
public:
    explicit ProgressiveWarpImpl(const PcwOptions& options = {});

    PcwOutputs forward(const torch::Tensor& clothing, const torch::Tensor& clothing_mask,
                       const torch::Tensor& occluded_parsing, const torch::Tensor& keypoints,
                       const torch::Tensor& occluded_person);
    PcwOutputs forward(const TryOnBatch& batch);

    /// Affine stage only: parameters, C_a and M_a.
    std::tuple<torch::Tensor, torch::Tensor, torch::Tensor> prealign(const torch::Tensor& clothing,
                                                                     const torch::Tensor& clothing_mask,
                                                                     const torch::Tensor& occluded_parsing,
                                                                     const torch::Tensor& keypoints);

    PreAlignNet prealign_net{nullptr};
    FlowPredictor flow_predictor{nullptr};
};
TORCH_MODULE(ProgressiveWarp);

/// Per-column linear decay over the clothing extent: 1.0 at the topmost clothing row,
/// `floor` at the bottommost, zero outside [top, bottom] and in empty columns.
torch::Tensor build_gravity_mask(const torch::Tensor& gt_mask, double floor = 0.0);

/// mean(|M_w - M^gt_w| * M_g)
torch::Tensor loss_gravity(const torch::Tensor& warped_mask, const torch::Tensor& gt_mask,
                           const torch::Tensor& gravity_mask);

/// mean over sites of sqrt(|D_x f|^2 + |D_y f|^2 + eps), forward differences, zero at the far border.
torch::Tensor loss_tv(const torch::Tensor& flow, double epsilon = 1e-6);

struct PcwLossTerms {
    torch::Tensor gravity;
    torch::Tensor perceptual;
    torch::Tensor tv;
    torch::Tensor total;
};

/// Weighted sum of gravity-aware, perceptual and smoothness terms.
PcwLossTerms pcw_total_loss(const torch::Tensor& warped_clothing, const torch::Tensor& warped_mask,
                            const torch::Tensor& flow, const torch::Tensor& gt_mask,
                            const torch::Tensor& gt_clothing, PerceptualBackbone& backbone,
                            const PcwOptions& options = {});

}  // namespace plvton
