#include "plvton/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "plvton/image_io.hpp"

namespace plvton {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

torch::Tensor render_keypoints(std::span<const Keypoint> pose, int64_t height, int64_t width, double sigma) {
    require(static_cast<int64_t>(pose.size()) == kNumKeypoints,
            "expected " + std::to_string(kNumKeypoints) + " keypoints, got " + std::to_string(pose.size()));
    require(height > 0 && width > 0, "heatmap size must be positive");
    require(sigma > 0.0, "keypoint sigma must be positive");

    auto heatmaps = torch::zeros({kNumKeypoints, height, width}, torch::kFloat32);
    const auto xs = torch::arange(width, torch::kFloat64).view({1, width});
    const auto ys = torch::arange(height, torch::kFloat64).view({height, 1});
    for (int64_t j = 0; j < kNumKeypoints; ++j) {
        const auto& kp = pose[static_cast<size_t>(j)];
        if (!kp.visible) continue;
        require(std::isfinite(kp.x) && std::isfinite(kp.y) && kp.x >= 0.0 && kp.x < static_cast<double>(width) &&
                    kp.y >= 0.0 && kp.y < static_cast<double>(height),
                "visible keypoint " + std::to_string(j) + " lies outside the image");
        const double cx = std::min(std::round(kp.x), static_cast<double>(width - 1));
        const double cy = std::min(std::round(kp.y), static_cast<double>(height - 1));
        const auto d2 = (xs - cx).square() + (ys - cy).square();
        heatmaps[j] = torch::exp(-d2 / (2.0 * sigma * sigma)).to(torch::kFloat32);
    }
    return heatmaps;
}

double keypoint_sigma_for(int64_t height) { return 3.0 * static_cast<double>(height) / 256.0; }

torch::Tensor encode_parsing(const torch::Tensor& labels) {
    require(labels.dim() == 2, "encode_parsing expects an H x W label image");
    const auto l = labels.to(torch::kLong);
    if (l.numel() > 0) {
        require(l.min().item<int64_t>() >= 0 && l.max().item<int64_t>() < kNumParsingClasses,
                "parsing labels must lie in 0..6");
    }
    return F::one_hot(l, kNumParsingClasses).permute({2, 0, 1}).to(torch::kFloat32).contiguous();
}

torch::Tensor decode_parsing(const torch::Tensor& parsing) {
    require(parsing.dim() == 3 || parsing.dim() == 4, "parsing map must be 7 x H x W or N x 7 x H x W");
    const int64_t channel_dim = parsing.dim() - 3;
    require(parsing.size(channel_dim) == kNumParsingClasses, "parsing map must have 7 channels");
    return parsing.argmax(channel_dim);
}

torch::Tensor reduce_lip_labels(const torch::Tensor& lip_labels) {
    // LIP: 0 bg, 1 hat, 2 hair, 3 glove, 4 sunglasses, 5 upper, 6 dress, 7 coat, 8 socks, 9 pants,
    // 10 jumpsuit, 11 scarf, 12 skirt, 13 face, 14 left arm, 15 right arm, 16-19 legs / shoes
    static const std::vector<int64_t> table = {0, 1, 1, 6, 2, 3, 3, 3, 6, 6, 6, 6, 6, 2, 4, 5, 6, 6, 6, 6};
    const auto l = lip_labels.to(torch::kLong);
    require(l.numel() == 0 || (l.min().item<int64_t>() >= 0 && l.max().item<int64_t>() < 20),
            "LIP labels must lie in 0..19");
    return torch::tensor(table, torch::kLong).index({l});
}

torch::Tensor build_agnostic_mask(const torch::Tensor& parsing) {
    require(parsing.dim() == 3 && parsing.size(0) == kNumParsingClasses, "parsing map must be 7 x H x W");
    const auto labels = decode_parsing(parsing);
    const auto clothing = labels == class_index(ParsingClass::UpperClothes);
    require(clothing.any().item<bool>(), "parsing map has no clothing pixels; sample is not usable for training");

    const auto limbs = (labels == class_index(ParsingClass::LeftArm)) | (labels == class_index(ParsingClass::RightArm));
    // Clothing rectangle widened to cover exposed arms.
    const auto support = clothing | limbs;
    const auto rows = support.any(1).nonzero().flatten();
    const auto cols = support.any(0).nonzero().flatten();
    const int64_t top = rows.min().item<int64_t>();
    const int64_t bottom = rows.max().item<int64_t>();
    const int64_t left = cols.min().item<int64_t>();
    const int64_t right = cols.max().item<int64_t>();

    auto mask = torch::zeros_like(labels, torch::kBool);
    mask.index_put_({torch::indexing::Slice(top, bottom + 1), torch::indexing::Slice(left, right + 1)}, true);

    const auto preserved = (labels == class_index(ParsingClass::Background)) |
                           (labels == class_index(ParsingClass::Hair)) |
                           (labels == class_index(ParsingClass::Face)) |
                           (labels == class_index(ParsingClass::LowerBody));
    mask &= ~preserved;
    return mask.to(torch::kFloat32).unsqueeze(0);
}

OccludedPerson apply_occlusion(const torch::Tensor& person, const torch::Tensor& parsing, const torch::Tensor& mask,
                               double fill) {
    require(person.dim() == 3 && parsing.dim() == 3 && mask.dim() == 3, "apply_occlusion expects unbatched tensors");
    require(mask.size(0) == 1, "occlusion mask must have one channel");
    require(person.sizes().slice(1) == mask.sizes().slice(1) && parsing.sizes().slice(1) == mask.sizes().slice(1),
            "person, parsing and mask must share H x W");
    require(parsing.size(0) == kNumParsingClasses, "parsing map must have 7 channels");

    const auto m = mask.to(person.scalar_type());
    auto background = torch::zeros_like(parsing);
    background[class_index(ParsingClass::Background)].fill_(1.0);
    return {person * (1.0 - m) + fill * m, parsing * (1.0 - m) + background * m};
}

GroundTruthWarp extract_gt_warp(const torch::Tensor& person, const torch::Tensor& parsing) {
    require(parsing.dim() == 3 && parsing.size(0) == kNumParsingClasses, "parsing map must be 7 x H x W");
    require(person.dim() == 3 && person.sizes().slice(1) == parsing.sizes().slice(1),
            "person and parsing must share H x W");
    auto mask = parsing.narrow(0, class_index(ParsingClass::UpperClothes), 1).clone();
    return {mask, person * mask};
}

TryOnSample make_sample(torch::Tensor person, torch::Tensor clothing, torch::Tensor clothing_mask,
                        const torch::Tensor& labels, Pose pose) {
    require(person.dim() == 3 && person.size(0) == 3, "person image must be 3 x H x W");
    const int64_t h = person.size(1);
    const int64_t w = person.size(2);
    require(clothing.sizes() == person.sizes(), "clothing image must match the person image size");
    require(clothing_mask.dim() == 3 && clothing_mask.size(0) == 1 && clothing_mask.size(1) == h &&
                clothing_mask.size(2) == w,
            "clothing mask must be 1 x H x W");
    require(labels.dim() == 2 && labels.size(0) == h && labels.size(1) == w, "label map must be H x W");

    TryOnSample s;
    s.person = std::move(person);
    s.clothing = std::move(clothing);
    s.clothing_mask = (clothing_mask > 0.5).to(torch::kFloat32);
    s.parsing = encode_parsing(labels);
    s.keypoints = render_keypoints(pose, h, w, keypoint_sigma_for(h));
    s.pose = std::move(pose);

    const auto mask = build_agnostic_mask(s.parsing);
    auto occluded = apply_occlusion(s.person, s.parsing, mask);
    s.occluded_person = std::move(occluded.person);
    s.occluded_parsing = std::move(occluded.parsing);
    auto gt = extract_gt_warp(s.person, s.parsing);
    s.gt_warp_mask = std::move(gt.mask);
    s.gt_warp_clothing = std::move(gt.clothing);
    return s;
}

TryOnBatch TryOnBatch::to(const torch::Device& device) const {
    return {person.to(device),          clothing.to(device),         clothing_mask.to(device),
            parsing.to(device),         keypoints.to(device),        occluded_person.to(device),
            occluded_parsing.to(device), gt_warp_mask.to(device),     gt_warp_clothing.to(device)};
}

TryOnBatch collate(std::span<const TryOnSample> samples) {
    require(!samples.empty(), "cannot collate an empty batch");
    auto stack = [&](auto member) {
        std::vector<torch::Tensor> parts;
        parts.reserve(samples.size());
        for (const auto& s : samples) parts.push_back(s.*member);
        return torch::stack(parts);
    };
    return {stack(&TryOnSample::person),          stack(&TryOnSample::clothing),
            stack(&TryOnSample::clothing_mask),   stack(&TryOnSample::parsing),
            stack(&TryOnSample::keypoints),       stack(&TryOnSample::occluded_person),
            stack(&TryOnSample::occluded_parsing), stack(&TryOnSample::gt_warp_mask),
            stack(&TryOnSample::gt_warp_clothing)};
}

std::vector<PairEntry> read_pairs(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open pairs file " + path.string());
    std::vector<PairEntry> pairs;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        PairEntry e;
        if (!(ls >> e.person)) continue;
        if (!(ls >> e.cloth)) {
            throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": expected 'person cloth'");
        }
        pairs.push_back(std::move(e));
    }
    return pairs;
}

Pose read_pose_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open pose file " + path.string());
    const auto doc = nlohmann::json::parse(in);

    std::vector<double> flat;
    if (doc.is_array()) {
        for (const auto& p : doc) {
            require(p.is_array() && p.size() == 3, "pose entries must be [x, y, confidence]");
            for (const auto& v : p) flat.push_back(v.get<double>());
        }
    } else if (doc.contains("people") && !doc["people"].empty()) {
        const auto& person = doc["people"][0];
        const auto& kps = person.contains("pose_keypoints_2d") ? person["pose_keypoints_2d"] : person["pose_keypoints"];
        for (const auto& v : kps) flat.push_back(v.get<double>());
    } else {
        flat.assign(kNumKeypoints * 3, 0.0);
    }
    require(flat.size() == static_cast<size_t>(kNumKeypoints * 3),
            path.string() + ": expected " + std::to_string(kNumKeypoints) + " keypoints");

    Pose pose(kNumKeypoints);
    for (size_t j = 0; j < pose.size(); ++j) {
        pose[j] = {flat[3 * j], flat[3 * j + 1], flat[3 * j + 2] > 0.0};
    }
    return pose;
}

void write_pose_json(const fs::path& path, std::span<const Keypoint> pose) {
    auto doc = nlohmann::json::array();
    for (const auto& kp : pose) doc.push_back({kp.x, kp.y, kp.visible ? 1.0 : 0.0});
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write pose file " + path.string());
    out << doc.dump() << '\n';
}

namespace {

std::string stem_of(const std::string& name) { return fs::path(name).stem().string(); }

fs::path first_existing(std::initializer_list<fs::path> candidates) {
    for (const auto& c : candidates) {
        if (fs::exists(c)) return c;
    }
    return *candidates.begin();
}

torch::Tensor resize_image(const torch::Tensor& image, int64_t height, int64_t width) {
    if (image.size(1) == height && image.size(2) == width) return image;
    return F::interpolate(image.unsqueeze(0), F::InterpolateFuncOptions()
                                                  .size(std::vector<int64_t>{height, width})
                                                  .mode(torch::kBilinear)
                                                  .align_corners(false))
        .squeeze(0)
        .clamp(0.0, 1.0);
}

}  // namespace

VitonDataset::VitonDataset(fs::path root, std::vector<PairEntry> pairs, int64_t height, int64_t width)
    : root_(std::move(root)), pairs_(std::move(pairs)), height_(height), width_(width) {
    require(height_ > 0 && width_ > 0, "dataset resolution must be positive");
}

VitonDataset VitonDataset::open(const fs::path& root, const std::string& pairs_file, int64_t height, int64_t width) {
    const fs::path pairs_path = fs::path(pairs_file).is_absolute() ? fs::path(pairs_file) : root / pairs_file;
    return VitonDataset(root, read_pairs(pairs_path), height, width);
}

fs::path VitonDataset::parsing_path(const std::string& person_name) const {
    return root_ / "image-parse" / (stem_of(person_name) + ".png");
}

fs::path VitonDataset::pose_path(const std::string& person_name) const {
    const auto stem = stem_of(person_name);
    return first_existing({root_ / "pose" / (stem + ".json"), root_ / "pose" / (stem + "_keypoints.json")});
}

fs::path VitonDataset::cloth_mask_path(const std::string& cloth_name) const {
    return first_existing({root_ / "cloth-mask" / cloth_name, root_ / "cloth-mask" / (stem_of(cloth_name) + ".png"),
                           root_ / "cloth-mask" / (stem_of(cloth_name) + ".jpg")});
}

TryOnSample VitonDataset::get(size_t index) const {
    require(index < pairs_.size(), "sample index out of range");
    return load(pairs_[index].person, pairs_[index].cloth);
}

namespace {
TryOnSample load_split(const VitonDataset& people, const VitonDataset& clothes, const std::string& person_name,
                       const std::string& cloth_name);
}  // namespace

TryOnSample VitonDataset::load(const std::string& person_name, const std::string& cloth_name) const {
    return load_split(*this, *this, person_name, cloth_name);
}

TryOnSample load_try_on_pair(const std::filesystem::path& person_image, const std::filesystem::path& cloth_image,
                             int64_t height, int64_t width) {
    require(std::filesystem::exists(person_image), "person image not found: " + person_image.string());
    require(std::filesystem::exists(cloth_image), "cloth image not found: " + cloth_image.string());
    const VitonDataset person_root(person_image.parent_path().parent_path(), {}, height, width);
    const VitonDataset cloth_root(cloth_image.parent_path().parent_path(), {}, height, width);
    return load_split(person_root, cloth_root, person_image.filename().string(), cloth_image.filename().string());
}

namespace {

TryOnSample load_split(const VitonDataset& people, const VitonDataset& clothes, const std::string& person_name,
                       const std::string& cloth_name) {
    const auto height_ = people.height();
    const auto width_ = people.width();
    auto person = io::read_rgb(people.root() / "image" / person_name);
    const int64_t raw_h = person.size(1);
    const int64_t raw_w = person.size(2);
    person = resize_image(person, height_, width_);

    auto clothing = io::read_rgb(clothes.root() / "cloth" / cloth_name, height_, width_);
    auto clothing_mask = io::read_mask(clothes.cloth_mask_path(cloth_name), height_, width_);

    auto labels = io::read_label_png(people.parsing_path(person_name));
    if (labels.numel() > 0 && labels.max().item<int64_t>() >= kNumParsingClasses) labels = reduce_lip_labels(labels);
    labels = io::resize_labels(labels, height_, width_);

    auto pose = read_pose_json(people.pose_path(person_name));
    const double sx = static_cast<double>(width_) / static_cast<double>(raw_w);
    const double sy = static_cast<double>(height_) / static_cast<double>(raw_h);
    for (auto& kp : pose) {
        kp.x *= sx;
        kp.y *= sy;
        if (kp.x < 0.0 || kp.y < 0.0 || kp.x >= static_cast<double>(width_) || kp.y >= static_cast<double>(height_)) {
            kp.visible = false;
        }
    }

    auto sample = make_sample(std::move(person), std::move(clothing), std::move(clothing_mask), labels, std::move(pose));
    sample.person_name = person_name;
    sample.cloth_name = cloth_name;
    return sample;
}

}  // namespace

}  // namespace plvton
