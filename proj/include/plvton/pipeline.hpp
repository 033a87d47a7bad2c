#pragma once

// Orchestration: stage-wise training loops, end-to-end inference and evaluation.

#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "plvton/checkpoint.hpp"
#include "plvton/config.hpp"
#include "plvton/dataio.hpp"
#include "plvton/ltf.hpp"
#include "plvton/metrics.hpp"
#include "plvton/pcw.hpp"
#include "plvton/ppe.hpp"

namespace plvton {

/// Device named by PLVTON_DEVICE ("cpu" when unset).
torch::Device device_from_env();

/// Raised when training hits a non-finite loss; a dump of the batch is written first.
class TrainingFault : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StepReport {
    int64_t step = 0;  // 1-based count of completed optimizer steps
    double lr = 0.0;
    double loss = 0.0;
    std::vector<std::pair<std::string, double>> terms;

    /// "step=12 lr=1.000000e-04 loss=... <term>=..." with fixed formatting.
    std::string to_line() const;
};

/// Trains one stage network. Upstream stages are replaced by ground-truth substitutes:
/// PPE sees M^gt_w and C^gt_w in place of the warped clothing, LTF additionally sees P^s as
/// the target parsing.
class StageTrainer {
public:
    StageTrainer(TrainConfig config, std::vector<TryOnSample> samples, torch::Device device = torch::kCPU);

    /// One optimizer step on the next batch of the seeded sample stream.
    StepReport step();

    int64_t steps_done() const { return steps_done_; }
    const TrainConfig& config() const { return config_; }

    torch::nn::Module& module();
    ProgressiveWarp& pcw();
    TargetParsingPredictor& ppe();
    TextureFusion& ltf();
    PerceptualBackbone& backbone() { return backbone_; }
    const std::vector<TryOnSample>& samples() const { return samples_; }

    void save(const std::filesystem::path& path);

private:
    std::vector<size_t> next_batch_indices();
    [[noreturn]] void fault(const TryOnBatch& batch, const std::string& what);

    TrainConfig config_;
    std::vector<TryOnSample> samples_;
    torch::Device device_;
    PerceptualBackbone backbone_{nullptr};
    ProgressiveWarp pcw_{nullptr};
    TargetParsingPredictor ppe_{nullptr};
    TextureFusion ltf_{nullptr};
    std::unique_ptr<torch::optim::Adam> optimizer_;
    int64_t steps_done_ = 0;
    std::mt19937_64 order_rng_;
    std::vector<size_t> order_;
    size_t cursor_ = 0;
};

/// Called after every step; return true to stop early.
using StepObserver = std::function<bool(StageTrainer&, const StepReport&)>;

struct TrainResult {
    std::filesystem::path checkpoint;
    std::filesystem::path log;
    std::vector<StepReport> history;
};

/// Loads the configured dataset and runs `train_samples`.
TrainResult train(const TrainConfig& config, const StepObserver& observer = {});

/// Runs the configured number of steps, appending one log line per `log_every` steps to
/// <output>/train.log, writing periodic <stage>_step<N>.pt and a final <stage>.pt checkpoint.
TrainResult train_samples(const TrainConfig& config, std::vector<TryOnSample> samples,
                          const StepObserver& observer = {}, torch::Device device = torch::kCPU);

/// Loads the first `limit` (0 = all) samples of a dataset.
std::vector<TryOnSample> load_samples(const VitonDataset& dataset, int64_t limit = 0);

struct CheckpointPaths {
    std::filesystem::path pcw;
    std::filesystem::path ppe;
    std::filesystem::path ltf;

    /// pcw.pt, ppe.pt and ltf.pt inside `dir`.
    static CheckpointPaths in_directory(const std::filesystem::path& dir);
};

struct TryOnOutputs {
    torch::Tensor prealigned_clothing;  // C_a
    torch::Tensor warped_clothing;      // C_w
    torch::Tensor warped_mask;          // M_w
    torch::Tensor nonlimb_parsing;      // P^t_nl
    torch::Tensor target_parsing;       // P^t (probabilities)
    torch::Tensor coarse;               // I_c
    torch::Tensor fine;                 // I_f
};

/// Frozen three-stage chain: PCW -> PPE -> LTF.
class TryOnPipeline {
public:
    TryOnPipeline(ProgressiveWarp pcw, TargetParsingPredictor ppe, TextureFusion ltf,
                  torch::Device device = torch::kCPU);

    /// Loads all three stages; a missing checkpoint raises an error naming its stage.
    static TryOnPipeline load(const CheckpointPaths& paths, torch::Device device = torch::kCPU);

    TryOnOutputs run(const TryOnBatch& batch, bool zero_limb_patches = false);

private:
    ProgressiveWarp pcw_;
    TargetParsingPredictor ppe_;
    TextureFusion ltf_;
    torch::Device device_;
};

/// Writes the try-on result (ltf_fine.png) and, with `intermediates`, the five intermediate
/// images (pcw_prealigned, pcw_warped, ppe_nonlimb_parsing, ppe_target_parsing, ltf_coarse).
/// Returns the written paths. `index` selects a batch element; `prefix` is prepended to names.
std::vector<std::filesystem::path> write_outputs(const std::filesystem::path& dir, const TryOnOutputs& outputs,
                                                 bool intermediates, int64_t index = 0,
                                                 const std::string& prefix = "");

using Generator = std::function<torch::Tensor(const TryOnBatch&)>;

struct EvaluateOptions {
    bool paired = true;      // SSIM/PSNR need the person image as reference
    bool compute_fid = true;  // needs at least two images
    int64_t batch_size = 4;
};

/// Runs `generator` over the dataset in list order and scores its outputs against the person
/// images. FID compares embedded generated images with embedded person images.
MetricReport evaluate(const VitonDataset& dataset, const Generator& generator, FeatureEmbedder* embedder,
                      const EvaluateOptions& options = {});

/// Writes `<path>` (key = value text) and `<path stem>.csv` (per-image rows).
void write_report(const std::filesystem::path& path, const MetricReport& report);

}  // namespace plvton
