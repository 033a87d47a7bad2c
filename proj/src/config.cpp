#include "plvton/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace plvton {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // shortest representation that round-trips
    for (int precision = 1; precision <= 17; ++precision) {
        char tmp[64];
        std::snprintf(tmp, sizeof(tmp), "%.*g", precision, v);
        if (std::stod(tmp) == v) return tmp;
    }
    return buf;
}

template <size_t N>
std::string join(const std::array<double, N>& values) {
    std::string out;
    for (size_t i = 0; i < N; ++i) {
        if (i) out += ',';
        out += format_double(values[i]);
    }
    return out;
}

template <size_t N>
std::array<double, N> split_doubles(const std::string& key, const std::string& text) {
    std::array<double, N> out{};
    std::stringstream ss(text);
    std::string item;
    size_t i = 0;
    while (std::getline(ss, item, ',')) {
        require(i < N, key + ": expected " + std::to_string(N) + " comma-separated values");
        out[i++] = std::stod(trim(item));
    }
    require(i == N, key + ": expected " + std::to_string(N) + " comma-separated values");
    return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos, "config line " + std::to_string(line_no) + ": expected 'key = value'");
        const auto key = trim(line.substr(0, eq));
        require(!key.empty(), "config line " + std::to_string(line_no) + ": empty key");
        cfg.values_[key] = trim(line.substr(eq + 1));
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void KeyValueConfig::set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    require(eq != std::string::npos, "override must look like key=value: " + assignment);
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string KeyValueConfig::get_or(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    try {
        return std::stod(*v);
    } catch (const std::exception&) {
        throw InvalidInput("config key " + key + " is not a number: " + *v);
    }
}

int64_t KeyValueConfig::get_int(const std::string& key, int64_t fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    try {
        size_t used = 0;
        const auto parsed = std::stoll(*v, &used);
        require(used == v->size(), "config key " + key + " is not an integer: " + *v);
        return parsed;
    } catch (const std::invalid_argument&) {
        throw InvalidInput("config key " + key + " is not an integer: " + *v);
    }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw InvalidInput("config key " + key + " is not a boolean: " + *v);
}

std::string KeyValueConfig::to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

StageId parse_stage(const std::string& name) {
    if (name == "pcw") return StageId::Pcw;
    if (name == "ppe") return StageId::Ppe;
    if (name == "ltf") return StageId::Ltf;
    throw InvalidInput("unknown module '" + name + "' (expected pcw, ppe or ltf)");
}

std::string stage_name(StageId stage) {
    switch (stage) {
        case StageId::Pcw: return "pcw";
        case StageId::Ppe: return "ppe";
        case StageId::Ltf: return "ltf";
    }
    return "?";
}

TrainConfig TrainConfig::defaults(StageId stage, Profile profile) {
    TrainConfig c;
    c.stage = stage;
    c.profile = profile;
    const int64_t paper_steps = stage == StageId::Pcw ? 60000 : 80000;
    c.steps = profile == Profile::Paper ? paper_steps : paper_steps / 100;
    c.output_dir = "runs/" + stage_name(stage);
    return c;
}

TrainConfig TrainConfig::from(const KeyValueConfig& kv) {
    const auto stage = parse_stage(kv.get_or("module", "pcw"));
    const auto profile_name = kv.get_or("profile", "desk");
    require(profile_name == "desk" || profile_name == "paper", "profile must be desk or paper");
    auto c = defaults(stage, profile_name == "paper" ? Profile::Paper : Profile::Desk);

    c.steps = kv.get_int("steps", c.steps);
    require(c.steps > 0, "steps must be positive");
    c.batch_size = kv.get_int("batch_size", c.batch_size);
    require(c.batch_size > 0, "batch_size must be positive");
    c.learning_rate = kv.get_double("lr", c.learning_rate);
    c.adam_beta1 = kv.get_double("adam.beta1", c.adam_beta1);
    c.adam_beta2 = kv.get_double("adam.beta2", c.adam_beta2);
    c.seed = static_cast<uint64_t>(kv.get_int("seed", static_cast<int64_t>(c.seed)));
    c.deterministic = kv.get_bool("deterministic", c.deterministic);

    c.data_root = kv.get_or("data.root", c.data_root);
    c.data_pairs = kv.get_or("data.pairs", c.data_pairs);
    c.height = kv.get_int("data.height", c.height);
    c.width = kv.get_int("data.width", c.width);
    c.data_limit = kv.get_int("data.limit", c.data_limit);

    c.output_dir = kv.get_or("train.output", c.output_dir);
    c.checkpoint_every = kv.get_int("train.checkpoint_every", c.checkpoint_every);
    c.log_every = std::max<int64_t>(1, kv.get_int("train.log_every", c.log_every));

    c.perceptual_seed = static_cast<uint64_t>(kv.get_int("perceptual.seed", static_cast<int64_t>(c.perceptual_seed)));
    if (const auto w = kv.get("perceptual.stage_weights")) {
        c.pcw.stage_weights = c.ltf.stage_weights = split_doubles<kPerceptualStages>("perceptual.stage_weights", *w);
    }

    c.pcw.loss.gravity = kv.get_double("pcw.loss.gravity", c.pcw.loss.gravity);
    c.pcw.loss.perceptual = kv.get_double("pcw.loss.perceptual", c.pcw.loss.perceptual);
    c.pcw.loss.tv = kv.get_double("pcw.loss.tv", c.pcw.loss.tv);
    c.pcw.tv_epsilon = kv.get_double("pcw.tv_epsilon", c.pcw.tv_epsilon);
    c.pcw.gravity_floor = kv.get_double("pcw.gravity_floor", c.pcw.gravity_floor);
    c.pcw.gru_hidden = kv.get_int("pcw.gru_hidden", c.pcw.gru_hidden);

    if (const auto w = kv.get("ppe.class_weights")) {
        c.ppe.class_weights.values = split_doubles<kNumParsingClasses>("ppe.class_weights", *w);
        for (double v : c.ppe.class_weights.values) require(v > 0.0, "class weights must be positive");
    }
    c.ppe.probability_floor = kv.get_double("ppe.probability_floor", c.ppe.probability_floor);
    c.ppe.mask_threshold = kv.get_double("ppe.mask_threshold", c.ppe.mask_threshold);

    c.ltf.loss.image = kv.get_double("ltf.loss.image", c.ltf.loss.image);
    c.ltf.loss.perceptual = kv.get_double("ltf.loss.perceptual", c.ltf.loss.perceptual);
    c.ltf.loss.edge = kv.get_double("ltf.loss.edge", c.ltf.loss.edge);
    c.ltf.patch_scale = kv.get_int("ltf.patch_scale", c.ltf.patch_scale);
    require(c.ltf.patch_scale >= 1, "ltf.patch_scale must be positive");
    return c;
}

KeyValueConfig TrainConfig::to_kv() const {
    KeyValueConfig kv;
    kv.set("module", stage_name(stage));
    kv.set("profile", profile == Profile::Paper ? "paper" : "desk");
    kv.set("steps", std::to_string(steps));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("lr", format_double(learning_rate));
    kv.set("lr.schedule", "constant_then_linear_decay");
    kv.set("adam.beta1", format_double(adam_beta1));
    kv.set("adam.beta2", format_double(adam_beta2));
    kv.set("seed", std::to_string(seed));
    kv.set("deterministic", deterministic ? "true" : "false");
    kv.set("data.root", data_root);
    kv.set("data.pairs", data_pairs);
    kv.set("data.height", std::to_string(height));
    kv.set("data.width", std::to_string(width));
    kv.set("data.limit", std::to_string(data_limit));
    kv.set("train.output", output_dir);
    kv.set("train.checkpoint_every", std::to_string(checkpoint_every));
    kv.set("train.log_every", std::to_string(log_every));
    kv.set("perceptual.seed", std::to_string(perceptual_seed));
    kv.set("perceptual.stage_weights", join(pcw.stage_weights));
    kv.set("pcw.loss.gravity", format_double(pcw.loss.gravity));
    kv.set("pcw.loss.perceptual", format_double(pcw.loss.perceptual));
    kv.set("pcw.loss.tv", format_double(pcw.loss.tv));
    kv.set("pcw.tv_epsilon", format_double(pcw.tv_epsilon));
    kv.set("pcw.gravity_floor", format_double(pcw.gravity_floor));
    kv.set("pcw.gru_hidden", std::to_string(pcw.gru_hidden));
    kv.set("ppe.class_weights", join(ppe.class_weights.values));
    kv.set("ppe.probability_floor", format_double(ppe.probability_floor));
    kv.set("ppe.mask_threshold", format_double(ppe.mask_threshold));
    kv.set("ltf.loss.image", format_double(ltf.loss.image));
    kv.set("ltf.loss.perceptual", format_double(ltf.loss.perceptual));
    kv.set("ltf.loss.edge", format_double(ltf.loss.edge));
    kv.set("ltf.patch_scale", std::to_string(ltf.patch_scale));
    return kv;
}

double lr_at(int64_t step, int64_t total_steps, double base_lr) {
    require(total_steps > 0, "total_steps must be positive");
    require(step >= 0 && step <= total_steps, "step must lie in [0, total_steps]");
    const double half = static_cast<double>(total_steps) / 2.0;
    const double s = static_cast<double>(step);
    if (s < half) return base_lr;
    return base_lr * (1.0 - (s - half) / half);
}

}  // namespace plvton
