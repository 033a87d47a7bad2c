#pragma once

#include <filesystem>
#include <string>

#include "plvton/config.hpp"

namespace plvton {

inline constexpr int64_t kCheckpointFormatVersion = 1;

struct CheckpointInfo {
    int64_t format_version = kCheckpointFormatVersion;
    std::string stage;
    int64_t step = 0;
    std::string config_text;  // flat key-value snapshot of the training config
};

/// Writes a versioned archive holding the module weights, the stage name, the step counter and
/// the config snapshot.
void save_checkpoint(const std::filesystem::path& path, torch::nn::Module& module, const CheckpointInfo& info);

/// Reads only the metadata of a checkpoint.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Loads weights into `module`; the stored stage must equal `expected_stage`.
CheckpointInfo load_checkpoint(const std::filesystem::path& path, torch::nn::Module& module,
                               const std::string& expected_stage);

}  // namespace plvton
