#include "plvton/pcw.hpp"

#include "plvton/geowarp.hpp"

namespace plvton {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

// ---------------------------------------------------------------------------
// pre-alignment

PreAlignNetImpl::PreAlignNetImpl() {
    const std::array<int64_t, 6> widths = {3 + 1 + kNumParsingClasses + kNumKeypoints, 16, 32, 32, 64, 64};
    for (size_t i = 0; i + 1 < widths.size(); ++i) {
        trunk_.push_back(register_module("trunk" + std::to_string(i), conv3x3(widths[i], widths[i + 1], 2)));
    }
    const int64_t flat = 64 * 4 * 3;
    scale_hidden_ = register_module("scale_hidden", nn::Linear(flat, 64));
    scale_out_ = register_module("scale_out", nn::Linear(64, 2));
    shift_hidden_ = register_module("shift_hidden", nn::Linear(flat, 64));
    shift_out_ = register_module("shift_out", nn::Linear(64, 2));
    torch::NoGradGuard guard;
    for (auto* layer : {&scale_out_, &shift_out_}) {
        (*layer)->weight.zero_();
        (*layer)->bias.zero_();
    }
}

torch::Tensor PreAlignNetImpl::forward(const torch::Tensor& clothing, const torch::Tensor& clothing_mask,
                                       const torch::Tensor& occluded_parsing, const torch::Tensor& keypoints) {
    auto x = torch::cat({clothing, clothing_mask, occluded_parsing, keypoints}, 1);
    for (auto& conv : trunk_) x = lrelu(conv->forward(x));
    x = F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions({4, 3})).flatten(1);
    const auto log_scale = scale_out_->forward(lrelu(scale_hidden_->forward(x)));
    const auto shift = shift_out_->forward(lrelu(shift_hidden_->forward(x)));
    return torch::cat({torch::exp(log_scale), shift}, 1);
}

// ---------------------------------------------------------------------------
// ConvGRU

ConvGruCellImpl::ConvGruCellImpl(int64_t input_channels, int64_t hidden_channels, int64_t kernel)
    : input_(input_channels), hidden_(hidden_channels) {
    require(kernel % 2 == 1, "GRU kernel size must be odd");
    auto make = [&](const std::string& name, int64_t in, bool bias) {
        return register_module(name, nn::Conv2d(nn::Conv2dOptions(in, hidden_, kernel).padding(kernel / 2).bias(bias)));
    };
    w_fr = make("w_fr", input_, true);
    w_hr = make("w_hr", hidden_, false);
    w_fz = make("w_fz", input_, true);
    w_hz = make("w_hz", hidden_, false);
    w_fh = make("w_fh", input_, true);
    w_hh = make("w_hh", hidden_, false);
}

torch::Tensor ConvGruCellImpl::forward(const torch::Tensor& input, const torch::Tensor& hidden) {
    require(input.dim() == 4 && hidden.dim() == 4, "GRU expects N x C x H x W tensors");
    require(input.size(1) == input_, "GRU input channel mismatch");
    require(hidden.size(1) == hidden_, "GRU hidden channel mismatch");
    require(input.size(0) == hidden.size(0) && input.size(2) == hidden.size(2) && input.size(3) == hidden.size(3),
            "GRU input and hidden state must share batch and spatial size");
    const auto reset = torch::sigmoid(w_fr->forward(input) + w_hr->forward(hidden));
    const auto update = torch::sigmoid(w_fz->forward(input) + w_hz->forward(hidden));
    const auto candidate = torch::tanh(w_fh->forward(input) + w_hh->forward(reset * hidden));
    return (1.0 - update) * hidden + update * candidate;
}

torch::Tensor gru_step(ConvGruCell& cell, const torch::Tensor& subflow, const torch::Tensor& previous) {
    return cell->forward(subflow, previous);
}

// ---------------------------------------------------------------------------
// flow predictor

std::pair<int64_t, int64_t> aggregation_size(int64_t height, int64_t width) {
    return {std::max<int64_t>(1, height / 4), std::max<int64_t>(1, width / 4)};
}

FlowPredictorImpl::FlowPredictorImpl(const PcwOptions& options) {
    int64_t in = 3 + kNumKeypoints + kNumParsingClasses + 3;
    for (int k = 0; k < kNumSubFlows; ++k) {
        const int64_t out = options.encoder_channels[static_cast<size_t>(k)];
        encoder_.push_back(register_module("enc" + std::to_string(k), ResidualBlock(in, out, 2)));
        heads_.push_back(register_module("head" + std::to_string(k), conv1x1(out, 2)));
        in = out;
    }
    gru_ = register_module("gru", ConvGruCell(2, options.gru_hidden));
    const std::array<int64_t, 6> widths = {options.gru_hidden, 32, 32, 32, 16, 2};
    for (size_t i = 0; i + 1 < widths.size(); ++i) {
        decoder_.push_back(register_module("dec" + std::to_string(i), conv3x3(widths[i], widths[i + 1])));
    }
    torch::NoGradGuard guard;
    decoder_.back()->weight.zero_();
    decoder_.back()->bias.zero_();
}

FlowPrediction FlowPredictorImpl::forward(const torch::Tensor& prealigned_clothing, const torch::Tensor& keypoints,
                                          const torch::Tensor& occluded_parsing, const torch::Tensor& occluded_person) {
    auto x = torch::cat({prealigned_clothing, keypoints, occluded_parsing, occluded_person}, 1);
    std::vector<torch::Tensor> fine_to_coarse;
    for (size_t k = 0; k < encoder_.size(); ++k) {
        x = encoder_[k]->forward(x);
        fine_to_coarse.push_back(heads_[k]->forward(x));
    }
    FlowPrediction out;
    out.subflows.assign(fine_to_coarse.rbegin(), fine_to_coarse.rend());
    out.flow = aggregate(out.subflows, prealigned_clothing.size(2), prealigned_clothing.size(3));
    return out;
}

torch::Tensor FlowPredictorImpl::aggregate_hidden(const std::vector<torch::Tensor>& subflows, int64_t height,
                                                  int64_t width) {
    require(static_cast<int>(subflows.size()) == kNumSubFlows,
            "expected " + std::to_string(kNumSubFlows) + " sub-flows, got " + std::to_string(subflows.size()));
    const auto& first = subflows.front();
    auto hidden = torch::zeros({first.size(0), gru_->hidden_channels(), height, width}, first.options());
    for (const auto& f : subflows) hidden = gru_step(gru_, resize_flow(f, height, width), hidden);
    return hidden;
}

torch::Tensor FlowPredictorImpl::aggregate(const std::vector<torch::Tensor>& subflows, int64_t height, int64_t width) {
    const auto [qh, qw] = aggregation_size(height, width);
    auto x = aggregate_hidden(subflows, qh, qw);
    for (size_t i = 0; i < decoder_.size(); ++i) {
        x = decoder_[i]->forward(x);
        if (i + 1 < decoder_.size()) x = lrelu(x);
    }
    return resize_flow(x, height, width);
}

// ---------------------------------------------------------------------------
// full stage

ProgressiveWarpImpl::ProgressiveWarpImpl(const PcwOptions& options) {
    prealign_net = register_module("prealign", PreAlignNet());
    flow_predictor = register_module("flow", FlowPredictor(options));
}

std::tuple<torch::Tensor, torch::Tensor, torch::Tensor> ProgressiveWarpImpl::prealign(
    const torch::Tensor& clothing, const torch::Tensor& clothing_mask, const torch::Tensor& occluded_parsing,
    const torch::Tensor& keypoints) {
    auto params = prealign_net->forward(clothing, clothing_mask, occluded_parsing, keypoints);
    auto c_a = affine_apply(clothing, params, kShopFill);
    auto m_a = affine_apply(clothing_mask, params, kMaskFill);
    return {params, c_a, m_a};
}

PcwOutputs ProgressiveWarpImpl::forward(const torch::Tensor& clothing, const torch::Tensor& clothing_mask,
                                        const torch::Tensor& occluded_parsing, const torch::Tensor& keypoints,
                                        const torch::Tensor& occluded_person) {
    require(clothing.dim() == 4, "PCW expects batched inputs");
    const auto hw = clothing.sizes().slice(2);
    for (const auto* t : {&clothing_mask, &occluded_parsing, &keypoints, &occluded_person}) {
        require(t->dim() == 4 && t->sizes().slice(2) == hw, "PCW inputs must share H x W");
    }
    PcwOutputs out;
    std::tie(out.params, out.prealigned_clothing, out.prealigned_mask) =
        prealign(clothing, clothing_mask, occluded_parsing, keypoints);
    auto prediction = flow_predictor->forward(out.prealigned_clothing, keypoints, occluded_parsing, occluded_person);
    out.subflows = std::move(prediction.subflows);
    out.flow = std::move(prediction.flow);
    out.warped_mask = flow_warp(out.prealigned_mask, out.flow, kMaskFill);
    out.warped_clothing = flow_warp(out.prealigned_clothing, out.flow, kShopFill) * out.warped_mask;
    return out;
}

PcwOutputs ProgressiveWarpImpl::forward(const TryOnBatch& batch) {
    return forward(batch.clothing, batch.clothing_mask, batch.occluded_parsing, batch.keypoints,
                   batch.occluded_person);
}

// ---------------------------------------------------------------------------
// losses

torch::Tensor build_gravity_mask(const torch::Tensor& gt_mask, double floor) {
    const int64_t rank = gt_mask.dim();
    const auto m = as_batch(gt_mask) > 0.5;
    require(m.size(1) == 1, "gravity mask expects a single-channel mask");
    const int64_t h = m.size(2);
    const auto rows = torch::arange(h, torch::TensorOptions().dtype(torch::kLong).device(m.device())).view({1, 1, h, 1});
    const auto top = torch::where(m, rows, torch::full({}, h, rows.options())).amin(2, true);
    const auto bottom = torch::where(m, rows, torch::full({}, -1, rows.options())).amax(2, true);

    const auto r = rows.to(torch::kFloat32);
    const auto t = top.to(torch::kFloat32);
    const auto span = (bottom - top).to(torch::kFloat32);
    const auto frac = torch::where(span > 0, (r - t) / span.clamp_min(1.0), torch::zeros_like(r));
    auto weights = 1.0 - (1.0 - floor) * frac;
    const auto inside = (rows >= top) & (rows <= bottom);
    weights = torch::where(inside, weights, torch::zeros_like(weights));
    return restore_rank(weights.to(c10::isFloatingType(gt_mask.scalar_type()) ? gt_mask.scalar_type() : torch::kFloat32), rank);
}

torch::Tensor loss_gravity(const torch::Tensor& warped_mask, const torch::Tensor& gt_mask,
                           const torch::Tensor& gravity_mask) {
    require(warped_mask.sizes() == gt_mask.sizes() && gt_mask.sizes() == gravity_mask.sizes(),
            "gravity loss inputs must share a shape");
    return ((warped_mask - gt_mask) * gravity_mask).abs().mean();
}

torch::Tensor loss_tv(const torch::Tensor& flow, double epsilon) {
    const auto f = as_batch(flow);
    require(f.size(1) == 2, "flow must have 2 channels");
    const auto dx = F::pad(f.narrow(3, 1, f.size(3) - 1) - f.narrow(3, 0, f.size(3) - 1),
                           F::PadFuncOptions({0, 1, 0, 0}));
    const auto dy = F::pad(f.narrow(2, 1, f.size(2) - 1) - f.narrow(2, 0, f.size(2) - 1),
                           F::PadFuncOptions({0, 0, 0, 1}));
    return torch::sqrt(dx.square().sum(1) + dy.square().sum(1) + epsilon).mean();
}

PcwLossTerms pcw_total_loss(const torch::Tensor& warped_clothing, const torch::Tensor& warped_mask,
                            const torch::Tensor& flow, const torch::Tensor& gt_mask, const torch::Tensor& gt_clothing,
                            PerceptualBackbone& backbone, const PcwOptions& options) {
    PcwLossTerms terms;
    const auto gravity = build_gravity_mask(gt_mask, options.gravity_floor);
    terms.gravity = loss_gravity(warped_mask, gt_mask, gravity);
    terms.perceptual = options.loss.perceptual != 0.0
                           ? perceptual_distance(backbone, warped_clothing, gt_clothing, options.stage_weights)
                           : torch::zeros({}, warped_clothing.options());
    terms.tv = loss_tv(flow, options.tv_epsilon);
    terms.total = options.loss.gravity * terms.gravity + options.loss.perceptual * terms.perceptual +
                  options.loss.tv * terms.tv;
    return terms;
}

}  // namespace plvton
