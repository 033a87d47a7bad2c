#include "plvton/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "plvton/image_io.hpp"

namespace plvton {

namespace fs = std::filesystem;

torch::Device device_from_env() {
    const char* name = std::getenv("PLVTON_DEVICE");
    if (name == nullptr || *name == '\0') return torch::kCPU;
    try {
        return torch::Device(name);
    } catch (const c10::Error&) {
        throw InvalidInput(std::string("PLVTON_DEVICE: unknown device '") + name + "'");
    }
}

std::string StepReport::to_line() const {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "step=%lld lr=%.6e loss=%.8e", static_cast<long long>(step), lr, loss);
    std::string line = buf;
    for (const auto& [name, value] : terms) {
        std::snprintf(buf, sizeof(buf), " %s=%.8e", name.c_str(), value);
        line += buf;
    }
    return line;
}

// ---------------------------------------------------------------------------
// training

StageTrainer::StageTrainer(TrainConfig config, std::vector<TryOnSample> samples, torch::Device device)
    : config_(std::move(config)), samples_(std::move(samples)), device_(device), order_rng_(config_.seed) {
    require(!samples_.empty(), "training needs at least one sample");
    require(config_.steps > 0, "steps must be positive");
    require(config_.batch_size > 0, "batch_size must be positive");
    require(config_.learning_rate > 0.0, "lr must be positive");
    if (config_.deterministic) at::globalContext().setDeterministicAlgorithms(true, false);
    torch::manual_seed(config_.seed);

    backbone_ = PerceptualBackbone(config_.perceptual_seed);
    backbone_->to(device_);
    std::vector<torch::Tensor> params;
    switch (config_.stage) {
        case StageId::Pcw:
            pcw_ = ProgressiveWarp(config_.pcw);
            pcw_->to(device_);
            params = pcw_->parameters();
            break;
        case StageId::Ppe:
            ppe_ = TargetParsingPredictor();
            ppe_->to(device_);
            params = ppe_->parameters();
            break;
        case StageId::Ltf:
            ltf_ = TextureFusion(config_.ltf);
            ltf_->to(device_);
            params = ltf_->parameters();
            break;
    }
    optimizer_ = std::make_unique<torch::optim::Adam>(
        params, torch::optim::AdamOptions(config_.learning_rate).betas({config_.adam_beta1, config_.adam_beta2}));
}

torch::nn::Module& StageTrainer::module() {
    switch (config_.stage) {
        case StageId::Pcw: return *pcw_;
        case StageId::Ppe: return *ppe_;
        case StageId::Ltf: return *ltf_;
    }
    throw std::logic_error("unknown stage");
}

ProgressiveWarp& StageTrainer::pcw() {
    require(config_.stage == StageId::Pcw, "trainer is not training pcw");
    return pcw_;
}

TargetParsingPredictor& StageTrainer::ppe() {
    require(config_.stage == StageId::Ppe, "trainer is not training ppe");
    return ppe_;
}

TextureFusion& StageTrainer::ltf() {
    require(config_.stage == StageId::Ltf, "trainer is not training ltf");
    return ltf_;
}

std::vector<size_t> StageTrainer::next_batch_indices() {
    const auto batch = std::min<size_t>(static_cast<size_t>(config_.batch_size), samples_.size());
    std::vector<size_t> out;
    out.reserve(batch);
    while (out.size() < batch) {
        if (cursor_ == order_.size()) {
            order_.resize(samples_.size());
            for (size_t i = 0; i < order_.size(); ++i) order_[i] = i;
            // Fisher-Yates with explicit draws keeps the order identical across standard libraries.
            for (size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[order_rng_() % i]);
            cursor_ = 0;
        }
        out.push_back(order_[cursor_++]);
    }
    return out;
}

void StageTrainer::fault(const TryOnBatch& batch, const std::string& what) {
    fs::create_directories(config_.output_dir);
    const auto dump = fs::path(config_.output_dir) / "nan_batch.pt";
    torch::serialize::OutputArchive archive;
    archive.write("person", batch.person.cpu());
    archive.write("clothing", batch.clothing.cpu());
    archive.write("clothing_mask", batch.clothing_mask.cpu());
    archive.write("parsing", batch.parsing.cpu());
    archive.write("keypoints", batch.keypoints.cpu());
    archive.write("occluded_person", batch.occluded_person.cpu());
    archive.write("occluded_parsing", batch.occluded_parsing.cpu());
    archive.write("gt_warp_mask", batch.gt_warp_mask.cpu());
    archive.write("gt_warp_clothing", batch.gt_warp_clothing.cpu());
    archive.save_to(dump.string());
    throw TrainingFault(stage_name(config_.stage) + " step " + std::to_string(steps_done_ + 1) + ": " + what +
                        "; batch written to " + dump.string());
}

StepReport StageTrainer::step() {
    const auto indices = next_batch_indices();
    std::vector<TryOnSample> picked;
    picked.reserve(indices.size());
    for (auto i : indices) picked.push_back(samples_[i]);
    const auto batch = collate(picked).to(device_);

    StepReport report;
    report.step = steps_done_ + 1;
    report.lr = lr_at(steps_done_, config_.steps, config_.learning_rate);
    for (auto& group : optimizer_->param_groups())
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(report.lr);

    module().train();
    optimizer_->zero_grad();
    torch::Tensor total;
    switch (config_.stage) {
        case StageId::Pcw: {
            auto out = pcw_->forward(batch);
            auto terms = pcw_total_loss(out.warped_clothing, out.warped_mask, out.flow, batch.gt_warp_mask,
                                        batch.gt_warp_clothing, backbone_, config_.pcw);
            total = terms.total;
            report.terms = {{"gravity", terms.gravity.item<double>()},
                            {"perceptual", terms.perceptual.item<double>()},
                            {"tv", terms.tv.item<double>()}};
            break;
        }
        case StageId::Ppe: {
            auto nonlimb = compose_nonlimb(batch.parsing, batch.gt_warp_mask, config_.ppe.mask_threshold);
            auto logits = ppe_->forward(nonlimb, batch.occluded_person, batch.occluded_parsing, batch.keypoints,
                                        batch.gt_warp_clothing);
            total = loss_ppe_from_logits(logits, batch.parsing, config_.ppe.class_weights);
            break;
        }
        case StageId::Ltf: {
            auto out = ltf_->forward(batch.gt_warp_clothing, batch.occluded_person, batch.parsing, batch.keypoints,
                                     batch.person);
            auto terms = loss_ltf(out.coarse, out.fine, batch.person, backbone_, config_.ltf);
            total = terms.total;
            report.terms = {{"coarse", terms.coarse.item<double>()}, {"fine", terms.fine.item<double>()}};
            break;
        }
    }
    report.loss = total.item<double>();
    if (!std::isfinite(report.loss)) fault(batch, "non-finite loss");
    total.backward();
    optimizer_->step();
    ++steps_done_;
    return report;
}

void StageTrainer::save(const fs::path& path) {
    CheckpointInfo info;
    info.stage = stage_name(config_.stage);
    info.step = steps_done_;
    info.config_text = config_.to_kv().to_text();
    save_checkpoint(path, module(), info);
}

std::vector<TryOnSample> load_samples(const VitonDataset& dataset, int64_t limit) {
    require(dataset.size() > 0, "dataset has no pairs");
    auto n = dataset.size();
    if (limit > 0) n = std::min<size_t>(n, static_cast<size_t>(limit));
    std::vector<TryOnSample> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) out.push_back(dataset.get(i));
    return out;
}

TrainResult train(const TrainConfig& config, const StepObserver& observer) {
    require(!config.data_root.empty(), "data.root is not set");
    auto dataset = VitonDataset::open(config.data_root, config.data_pairs, config.height, config.width);
    return train_samples(config, load_samples(dataset, config.data_limit), observer, device_from_env());
}

TrainResult train_samples(const TrainConfig& config, std::vector<TryOnSample> samples, const StepObserver& observer,
                          torch::Device device) {
    StageTrainer trainer(config, std::move(samples), device);
    const fs::path out_dir = config.output_dir;
    fs::create_directories(out_dir);
    const auto stage = stage_name(config.stage);

    TrainResult result;
    result.log = out_dir / "train.log";
    std::ofstream log(result.log, std::ios::app);
    if (!log) throw std::runtime_error("cannot write " + result.log.string());

    while (trainer.steps_done() < config.steps) {
        auto report = trainer.step();
        result.history.push_back(report);
        if (config.log_every > 0 && (report.step % config.log_every == 0 || report.step == config.steps)) {
            log << report.to_line() << '\n';
            log.flush();
        }
        if (config.checkpoint_every > 0 && report.step % config.checkpoint_every == 0 && report.step < config.steps)
            trainer.save(out_dir / (stage + "_step" + std::to_string(report.step) + ".pt"));
        if (observer && observer(trainer, report)) break;
    }
    result.checkpoint = out_dir / (stage + ".pt");
    trainer.save(result.checkpoint);
    return result;
}

// ---------------------------------------------------------------------------
// inference

CheckpointPaths CheckpointPaths::in_directory(const fs::path& dir) {
    return {dir / "pcw.pt", dir / "ppe.pt", dir / "ltf.pt"};
}

TryOnPipeline::TryOnPipeline(ProgressiveWarp pcw, TargetParsingPredictor ppe, TextureFusion ltf, torch::Device device)
    : pcw_(std::move(pcw)), ppe_(std::move(ppe)), ltf_(std::move(ltf)), device_(device) {
    pcw_->to(device_);
    ppe_->to(device_);
    ltf_->to(device_);
    pcw_->eval();
    ppe_->eval();
    ltf_->eval();
}

namespace {

TrainConfig stored_config(const fs::path& path, const std::string& stage) {
    if (!fs::exists(path)) throw InvalidInput("missing " + stage + " checkpoint: " + path.string());
    const auto info = read_checkpoint_info(path);
    auto kv = KeyValueConfig::parse(info.config_text);
    kv.set("module", stage);
    return TrainConfig::from(kv);
}

}  // namespace

TryOnPipeline TryOnPipeline::load(const CheckpointPaths& paths, torch::Device device) {
    const auto pcw_cfg = stored_config(paths.pcw, "pcw");
    stored_config(paths.ppe, "ppe");
    const auto ltf_cfg = stored_config(paths.ltf, "ltf");

    ProgressiveWarp pcw(pcw_cfg.pcw);
    TargetParsingPredictor ppe;
    TextureFusion ltf(ltf_cfg.ltf);
    load_checkpoint(paths.pcw, *pcw, "pcw");
    load_checkpoint(paths.ppe, *ppe, "ppe");
    load_checkpoint(paths.ltf, *ltf, "ltf");
    return TryOnPipeline(pcw, ppe, ltf, device);
}

TryOnOutputs TryOnPipeline::run(const TryOnBatch& input, bool zero_limb_patches) {
    torch::NoGradGuard no_grad;
    const auto batch = input.to(device_);
    auto warp = pcw_->forward(batch);
    auto nonlimb = compose_nonlimb(batch.parsing, warp.warped_mask);
    auto target = predict_target_parsing(ppe_, nonlimb, batch.occluded_person, batch.occluded_parsing,
                                         batch.keypoints, warp.warped_clothing);
    auto fused = ltf_->forward(warp.warped_clothing, batch.occluded_person, target, batch.keypoints, batch.person,
                               zero_limb_patches);
    return {warp.prealigned_clothing, warp.warped_clothing, warp.warped_mask, nonlimb, target, fused.coarse,
            fused.fine};
}

std::vector<fs::path> write_outputs(const fs::path& dir, const TryOnOutputs& outputs, bool intermediates,
                                    int64_t index, const std::string& prefix) {
    fs::create_directories(dir);
    std::vector<fs::path> written;
    auto put_rgb = [&](const std::string& name, const torch::Tensor& t) {
        auto path = dir / (prefix + name + ".png");
        io::write_rgb(path, t[index].detach().cpu().clamp(0.0, 1.0));
        written.push_back(path);
    };
    auto put_labels = [&](const std::string& name, const torch::Tensor& t) {
        auto path = dir / (prefix + name + ".png");
        io::write_label_png(path, decode_parsing(t[index].detach().cpu()));
        written.push_back(path);
    };
    if (intermediates) {
        put_rgb("pcw_prealigned", outputs.prealigned_clothing);
        put_rgb("pcw_warped", outputs.warped_clothing);
        put_labels("ppe_nonlimb_parsing", outputs.nonlimb_parsing);
        put_labels("ppe_target_parsing", outputs.target_parsing);
        put_rgb("ltf_coarse", outputs.coarse);
    }
    put_rgb("ltf_fine", outputs.fine);
    return written;
}

// ---------------------------------------------------------------------------
// evaluation

MetricReport evaluate(const VitonDataset& dataset, const Generator& generator, FeatureEmbedder* embedder,
                      const EvaluateOptions& options) {
    require(dataset.size() > 0, "evaluation pair list is empty");
    require(options.batch_size > 0, "batch_size must be positive");
    torch::NoGradGuard no_grad;

    MetricReport report;
    report.paired = options.paired;
    std::vector<torch::Tensor> generated_features;
    std::vector<torch::Tensor> real_features;
    for (size_t start = 0; start < dataset.size(); start += static_cast<size_t>(options.batch_size)) {
        const auto stop = std::min(dataset.size(), start + static_cast<size_t>(options.batch_size));
        std::vector<TryOnSample> samples;
        for (size_t i = start; i < stop; ++i) samples.push_back(dataset.get(i));
        const auto batch = collate(samples);
        const auto images = generator(batch).detach().cpu().to(torch::kFloat32).clamp(0.0, 1.0);
        require(images.sizes() == batch.person.sizes(), "generator output must match the person image shape");
        for (size_t i = 0; i < samples.size(); ++i) {
            ImageScore score;
            score.name = samples[i].person_name + " " + samples[i].cloth_name;
            if (options.paired) {
                score.ssim = ssim(images[static_cast<int64_t>(i)], batch.person[static_cast<int64_t>(i)]);
                score.psnr = psnr(images[static_cast<int64_t>(i)], batch.person[static_cast<int64_t>(i)]);
            }
            report.images.push_back(score);
        }
        if (options.compute_fid && embedder != nullptr) {
            generated_features.push_back(embedder->embed(images).to(torch::kFloat64));
            real_features.push_back(embedder->embed(batch.person).to(torch::kFloat64));
        }
    }
    if (options.compute_fid && embedder != nullptr && report.images.size() >= 2)
        report.fid = fid(torch::cat(generated_features), torch::cat(real_features));
    return report;
}

void write_report(const fs::path& path, const MetricReport& report) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream text(path);
    if (!text) throw std::runtime_error("cannot write " + path.string());
    text << report.to_text();
    auto csv_path = path;
    csv_path.replace_extension(".csv");
    require(csv_path != path, "report path must not end in .csv");
    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
    csv << report.to_csv();
}

}  // namespace plvton
