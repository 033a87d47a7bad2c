#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "plvton/common.hpp"

namespace plvton {

inline constexpr int kPerceptualStages = 5;
using StageWeights = std::array<double, kPerceptualStages>;

/// Per-stage weights of the perceptual distance, shallow to deep.
inline constexpr StageWeights kDefaultStageWeights = {1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0};

/// Frozen 5-stage conv/ReLU feature extractor. Weights are generated from a fixed seed,
/// so two backbones built with the same seed produce identical features.
class PerceptualBackboneImpl : public torch::nn::Module {
public:
    explicit PerceptualBackboneImpl(uint64_t seed = 19);

    /// Stage outputs for an N x 3 x H x W batch in [0, 1]; stage i is at 1/2^(i) resolution (i from 0).
    std::vector<torch::Tensor> features(const torch::Tensor& images);

    std::array<int64_t, kPerceptualStages> channels() const { return channels_; }

private:
    std::array<int64_t, kPerceptualStages> channels_ = {16, 32, 64, 64, 64};
    std::vector<torch::nn::Conv2d> stages_;
};
TORCH_MODULE(PerceptualBackbone);

/// sum_i w_i * mean|phi_i(x) - phi_i(y)|; differentiable in both arguments.
torch::Tensor perceptual_distance(PerceptualBackbone& backbone, const torch::Tensor& x, const torch::Tensor& y,
                                  const StageWeights& weights = kDefaultStageWeights);

/// Same as perceptual_distance with precomputed target features.
torch::Tensor perceptual_distance(PerceptualBackbone& backbone, const torch::Tensor& x,
                                  const std::vector<torch::Tensor>& target_features,
                                  const StageWeights& weights = kDefaultStageWeights);

inline constexpr int64_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kPsnrCap = 100.0;

/// Mean SSIM over valid 11x11 Gaussian windows of the channel-averaged images.
/// Accepts C x H x W or H x W tensors in [0, 1].
double ssim(const torch::Tensor& x, const torch::Tensor& y);

/// PSNR in dB for [0, 1] images; identical images give kPsnrCap.
double psnr(const torch::Tensor& x, const torch::Tensor& y);

/// Frechet distance between Gaussian fits of two feature sets (rows are samples).
double fid(const torch::Tensor& features_a, const torch::Tensor& features_b);

/// Maps images to feature vectors for FID.
class FeatureEmbedder {
public:
    virtual ~FeatureEmbedder() = default;
    virtual torch::Tensor embed(const torch::Tensor& images) = 0;  // N x 3 x H x W -> N x d
};

/// Default embedder: global average pools of the two deepest backbone stages.
class BackboneEmbedder : public FeatureEmbedder {
public:
    explicit BackboneEmbedder(uint64_t seed = 19);
    torch::Tensor embed(const torch::Tensor& images) override;

private:
    PerceptualBackbone backbone_;
};

/// Feature file I/O. ".npy" paths use the NumPy format (float32, 2-D, C order); any other
/// extension uses the native container: "PLVFEAT1" magic, uint64 rows, uint64 cols,
/// then rows*cols little-endian float32 values.
void write_features(const std::filesystem::path& path, const torch::Tensor& features);
torch::Tensor read_features(const std::filesystem::path& path);

struct ImageScore {
    std::string name;
    double ssim = 0.0;
    double psnr = 0.0;
};

struct MetricReport {
    std::vector<ImageScore> images;
    std::optional<double> fid;
    bool paired = true;  // unpaired reports carry no SSIM/PSNR

    double mean_ssim() const;
    double mean_psnr() const;

    /// "key = value" lines: count, ssim and psnr (paired only), fid (when present).
    std::string to_text() const;
    /// Header "name,ssim,psnr" ("name" when unpaired) then one row per image in report order.
    std::string to_csv() const;
};

}  // namespace plvton
