#include "plvton/checkpoint.hpp"

namespace plvton {

namespace {

CheckpointInfo read_info(torch::serialize::InputArchive& archive, const std::filesystem::path& path) {
    CheckpointInfo info;
    c10::IValue value;
    require(archive.try_read("format_version", value), path.string() + ": not a checkpoint (no format_version)");
    info.format_version = value.toInt();
    require(info.format_version == kCheckpointFormatVersion,
            path.string() + ": unsupported checkpoint format version " + std::to_string(info.format_version));
    archive.read("stage", value);
    info.stage = value.toStringRef();
    archive.read("step", value);
    info.step = value.toInt();
    archive.read("config", value);
    info.config_text = value.toStringRef();
    return info;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, torch::nn::Module& module, const CheckpointInfo& info) {
    torch::serialize::OutputArchive archive;
    archive.write("format_version", c10::IValue(info.format_version));
    archive.write("stage", c10::IValue(info.stage));
    archive.write("step", c10::IValue(info.step));
    archive.write("config", c10::IValue(info.config_text));
    torch::serialize::OutputArchive weights;
    module.save(weights);
    archive.write("weights", weights);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    archive.save_to(path.string());
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), "checkpoint not found: " + path.string());
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    return read_info(archive, path);
}

CheckpointInfo load_checkpoint(const std::filesystem::path& path, torch::nn::Module& module,
                               const std::string& expected_stage) {
    require(std::filesystem::exists(path), "missing " + expected_stage + " checkpoint: " + path.string());
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    auto info = read_info(archive, path);
    require(info.stage == expected_stage,
            path.string() + ": checkpoint holds stage '" + info.stage + "', expected '" + expected_stage + "'");
    torch::serialize::InputArchive weights;
    archive.read("weights", weights);
    module.load(weights);
    return info;
}

}  // namespace plvton
