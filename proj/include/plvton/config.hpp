#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "plvton/ltf.hpp"
#include "plvton/pcw.hpp"
#include "plvton/ppe.hpp"

namespace plvton {

/// Flat "dotted.key = value" text. '#' starts a comment; blank lines are ignored.
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text);
    static KeyValueConfig load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    /// Applies a "key=value" override.
    void set_assignment(const std::string& assignment);

    bool contains(const std::string& key) const { return values_.count(key) != 0; }
    std::optional<std::string> get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    /// Sorted "key = value" lines.
    std::string to_text() const;

private:
    std::map<std::string, std::string> values_;
};

enum class StageId { Pcw, Ppe, Ltf };

StageId parse_stage(const std::string& name);
std::string stage_name(StageId stage);

enum class Profile { Desk, Paper };

struct TrainConfig {
    StageId stage = StageId::Pcw;
    Profile profile = Profile::Desk;
    int64_t steps = 600;
    int64_t batch_size = 4;
    double learning_rate = 1e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    uint64_t seed = 0;
    bool deterministic = true;

    std::string data_root;
    std::string data_pairs = "pairs.txt";
    int64_t height = kDefaultHeight;
    int64_t width = kDefaultWidth;
    int64_t data_limit = 0;  // 0 = all pairs

    std::string output_dir = "runs";
    int64_t checkpoint_every = 0;  // 0 = final checkpoint only
    int64_t log_every = 1;

    uint64_t perceptual_seed = 19;
    PcwOptions pcw;
    PpeOptions ppe;
    LtfOptions ltf;

    /// Defaults for a stage. The paper profile keeps the published step counts
    /// (60K / 80K / 80K); the desk profile divides them by 100.
    static TrainConfig defaults(StageId stage, Profile profile = Profile::Desk);

    /// Defaults for the stage named in `kv` ("module" key), overridden by every key present.
    static TrainConfig from(const KeyValueConfig& kv);

    KeyValueConfig to_kv() const;
};

/// Constant learning rate for the first half of training, then linear decay to zero.
double lr_at(int64_t step, int64_t total_steps, double base_lr);

}  // namespace plvton
