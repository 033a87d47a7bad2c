// Command-line front end: preprocess, synth, train, infer, evaluate.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "plvton/image_io.hpp"
#include "plvton/pipeline.hpp"
#include "plvton/synthetic.hpp"

namespace fs = std::filesystem;
using namespace plvton;

namespace {

KeyValueConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    auto kv = path.empty() ? KeyValueConfig{} : KeyValueConfig::load(path);
    for (const auto& o : overrides) kv.set_assignment(o);
    return kv;
}

int run_preprocess(const fs::path& data_dir, const std::string& pairs_file, int64_t height, int64_t width) {
    auto dataset = VitonDataset::open(data_dir, pairs_file, height, width);
    const auto out = data_dir / "derived";
    for (const char* sub : {"agnostic", "agnostic-parse", "gt-warp", "gt-warp-mask", "pose-heatmap"})
        fs::create_directories(out / sub);

    size_t ok = 0;
    std::vector<std::string> skipped;
    for (size_t i = 0; i < dataset.size(); ++i) {
        const auto& pair = dataset.pairs()[i];
        TryOnSample s;
        try {
            s = dataset.get(i);
        } catch (const InvalidInput& e) {
            skipped.push_back(pair.person + ": " + e.what());
            continue;
        }
        const auto stem = fs::path(pair.person).stem().string() + ".png";
        io::write_rgb(out / "agnostic" / stem, s.occluded_person);
        io::write_label_png(out / "agnostic-parse" / stem, decode_parsing(s.occluded_parsing));
        io::write_rgb(out / "gt-warp" / stem, s.gt_warp_clothing);
        io::write_rgb(out / "gt-warp-mask" / stem, s.gt_warp_mask);
        io::write_rgb(out / "pose-heatmap" / stem, std::get<0>(s.keypoints.max(0, true)));
        ++ok;
    }
    std::ofstream summary(out / "summary.txt");
    summary << "processed = " << ok << "\nskipped = " << skipped.size() << '\n';
    for (const auto& s : skipped) summary << "skip " << s << '\n';
    std::cout << "processed " << ok << " samples, skipped " << skipped.size() << " -> " << out.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Three-stage virtual try-on: warping, parsing estimation, texture fusion"};
    app.require_subcommand(1);

    auto* pre = app.add_subcommand("preprocess", "derive agnostic inputs and ground-truth warps for a dataset");
    std::string pre_dir;
    std::string pre_pairs = "pairs.txt";
    int64_t pre_h = kDefaultHeight;
    int64_t pre_w = kDefaultWidth;
    pre->add_option("data_dir", pre_dir, "VITON-style dataset root")->required()->check(CLI::ExistingDirectory);
    pre->add_option("--pairs", pre_pairs, "pairs file inside data_dir");
    pre->add_option("--height", pre_h);
    pre->add_option("--width", pre_w);

    auto* syn = app.add_subcommand("synth", "write a synthetic VITON-style dataset");
    std::string syn_dir;
    int64_t syn_count = 8;
    synth::SyntheticOptions syn_opts;
    syn->add_option("out_dir", syn_dir)->required();
    syn->add_option("--count", syn_count);
    syn->add_option("--seed", syn_opts.seed);
    syn->add_option("--height", syn_opts.height);
    syn->add_option("--width", syn_opts.width);

    auto* tr = app.add_subcommand("train", "train one stage network");
    std::string tr_module;
    std::string tr_config;
    std::vector<std::string> tr_set;
    tr->add_option("--module", tr_module, "pcw, ppe or ltf")->required()->check(CLI::IsMember({"pcw", "ppe", "ltf"}));
    tr->add_option("--config", tr_config, "flat key = value config file")->check(CLI::ExistingFile);
    tr->add_option("--set", tr_set, "key=value override (repeatable)");

    auto* inf = app.add_subcommand("infer", "run the full chain on one person/cloth pair");
    std::string inf_person;
    std::string inf_cloth;
    std::string inf_out;
    std::string inf_ckpt = "runs";
    bool inf_intermediates = false;
    int64_t inf_h = kDefaultHeight;
    int64_t inf_w = kDefaultWidth;
    inf->add_option("--person", inf_person, "<root>/image/<name>")->required()->check(CLI::ExistingFile);
    inf->add_option("--cloth", inf_cloth, "<root>/cloth/<name>")->required()->check(CLI::ExistingFile);
    inf->add_option("--out", inf_out)->required();
    inf->add_option("--checkpoints", inf_ckpt, "directory holding pcw.pt, ppe.pt, ltf.pt");
    inf->add_flag("--intermediates", inf_intermediates, "also write per-stage images");
    inf->add_option("--height", inf_h);
    inf->add_option("--width", inf_w);

    auto* ev = app.add_subcommand("evaluate", "score the chain on a pair list");
    std::string ev_pairs;
    std::string ev_out;
    std::string ev_data;
    std::string ev_ckpt = "runs";
    std::string ev_features;
    bool ev_unpaired = false;
    uint64_t ev_seed = 19;
    int64_t ev_h = kDefaultHeight;
    int64_t ev_w = kDefaultWidth;
    ev->add_option("--pairs", ev_pairs, "pair list file")->required()->check(CLI::ExistingFile);
    ev->add_option("--out", ev_out, "report path; per-image rows go to <stem>.csv")->required();
    ev->add_option("--data", ev_data, "dataset root (default: directory of the pair list)");
    ev->add_option("--checkpoints", ev_ckpt, "directory holding pcw.pt, ppe.pt, ltf.pt");
    ev->add_flag("--unpaired", ev_unpaired, "pairs use other clothing; report FID only");
    ev->add_option("--features", ev_features, "write generated-image features (.npy or native)");
    ev->add_option("--embedder-seed", ev_seed);
    ev->add_option("--height", ev_h);
    ev->add_option("--width", ev_w);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*pre) return run_preprocess(pre_dir, pre_pairs, pre_h, pre_w);

        if (*syn) {
            synth::write_dataset(syn_dir, syn_count, syn_opts);
            std::cout << "wrote " << syn_count << " synthetic pairs to " << syn_dir << '\n';
            return 0;
        }

        if (*tr) {
            auto kv = load_config(tr_config, tr_set);
            if (kv.contains("module") && kv.get_or("module", "") != tr_module)
                throw InvalidInput("config module '" + kv.get_or("module", "") + "' conflicts with --module " + tr_module);
            kv.set("module", tr_module);
            const auto config = TrainConfig::from(kv);
            fs::create_directories(config.output_dir);
            std::ofstream(fs::path(config.output_dir) / (tr_module + "_config.txt")) << config.to_kv().to_text();
            auto result = train(config, [](StageTrainer&, const StepReport& r) {
                std::cout << r.to_line() << '\n';
                return false;
            });
            std::cout << "checkpoint " << result.checkpoint.string() << '\n';
            return 0;
        }

        const auto device = device_from_env();

        if (*inf) {
            auto pipeline = TryOnPipeline::load(CheckpointPaths::in_directory(inf_ckpt), device);
            const auto sample = load_try_on_pair(inf_person, inf_cloth, inf_h, inf_w);
            const auto outputs = pipeline.run(collate(std::span(&sample, 1)));
            for (const auto& p : write_outputs(inf_out, outputs, inf_intermediates)) std::cout << p.string() << '\n';
            return 0;
        }

        if (*ev) {
            const fs::path root = ev_data.empty() ? fs::path(ev_pairs).parent_path() : fs::path(ev_data);
            VitonDataset dataset(root, read_pairs(ev_pairs), ev_h, ev_w);
            auto pipeline = TryOnPipeline::load(CheckpointPaths::in_directory(ev_ckpt), device);
            BackboneEmbedder embedder(ev_seed);
            std::vector<torch::Tensor> features;
            auto generator = [&](const TryOnBatch& b) {
                auto fine = pipeline.run(b).fine;
                if (!ev_features.empty()) features.push_back(embedder.embed(fine.cpu()));
                return fine;
            };
            EvaluateOptions opts;
            opts.paired = !ev_unpaired;
            const auto report = evaluate(dataset, generator, &embedder, opts);
            write_report(ev_out, report);
            if (!ev_features.empty()) write_features(ev_features, torch::cat(features));
            std::cout << report.to_text();
            return 0;
        }
    } catch (const TrainingFault& e) {
        std::cerr << "training fault: " << e.what() << '\n';
        return 3;
    } catch (const InvalidInput& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
