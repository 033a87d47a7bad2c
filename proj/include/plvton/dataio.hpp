#pragma once

// VITON-format dataset loading and the clothing-agnostic person representation.
//
// Per-sample operations work on unbatched tensors: images are 3 x H x W in [0, 1],
// masks 1 x H x W in {0, 1}, parsing maps 7 x H x W one-hot, labels H x W int64.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plvton/common.hpp"

namespace plvton {

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    bool visible = false;
};

using Pose = std::vector<Keypoint>;

/// Renders one Gaussian heatmap per keypoint (peak 1.0 at the rounded point location).
/// Invisible points produce all-zero channels.
torch::Tensor render_keypoints(std::span<const Keypoint> pose, int64_t height, int64_t width,
                               double sigma = 3.0);

/// Keypoint sigma used at a given image height (3 px at 256 rows).
double keypoint_sigma_for(int64_t height);

/// One-hot encodes H x W labels in 0..6 into a 7 x H x W float map.
torch::Tensor encode_parsing(const torch::Tensor& labels);

/// Per-pixel argmax of a (possibly batched) parsing map.
torch::Tensor decode_parsing(const torch::Tensor& parsing);

/// Maps 20-class LIP labels (the annotation set shipped with VITON) onto the 7-class table.
torch::Tensor reduce_lip_labels(const torch::Tensor& lip_labels);

/// Occlusion mask of the agnostic representation: the bounding box of clothing and arm
/// pixels, cleared at background, hair, face and lower-body pixels.
/// Throws InvalidInput when the parsing map contains no clothing.
torch::Tensor build_agnostic_mask(const torch::Tensor& parsing);

struct OccludedPerson {
    torch::Tensor person;   // 3 x H x W
    torch::Tensor parsing;  // 7 x H x W
};

/// Fills masked person pixels with `fill` and sets masked parsing pixels to background.
OccludedPerson apply_occlusion(const torch::Tensor& person, const torch::Tensor& parsing,
                               const torch::Tensor& mask, double fill = kPersonFill);

struct GroundTruthWarp {
    torch::Tensor mask;      // 1 x H x W
    torch::Tensor clothing;  // 3 x H x W
};

/// Clothing channel of the parsing map and the person pixels under it.
GroundTruthWarp extract_gt_warp(const torch::Tensor& person, const torch::Tensor& parsing);

/// One aligned record with all derived tensors.
struct TryOnSample {
    std::string person_name;
    std::string cloth_name;
    Pose pose;

    torch::Tensor person;            // I
    torch::Tensor clothing;          // C
    torch::Tensor clothing_mask;     // M
    torch::Tensor parsing;           // P^s
    torch::Tensor keypoints;         // K, 18 x H x W
    torch::Tensor occluded_person;   // I_occ
    torch::Tensor occluded_parsing;  // P^s_occ
    torch::Tensor gt_warp_mask;      // M^gt_w
    torch::Tensor gt_warp_clothing;  // C^gt_w

    int64_t height() const { return person.size(1); }
    int64_t width() const { return person.size(2); }
};

/// Builds every derived tensor of a sample from its raw inputs.
TryOnSample make_sample(torch::Tensor person, torch::Tensor clothing, torch::Tensor clothing_mask,
                        const torch::Tensor& labels, Pose pose);

/// Samples stacked along a leading batch axis.
struct TryOnBatch {
    torch::Tensor person;
    torch::Tensor clothing;
    torch::Tensor clothing_mask;
    torch::Tensor parsing;
    torch::Tensor keypoints;
    torch::Tensor occluded_person;
    torch::Tensor occluded_parsing;
    torch::Tensor gt_warp_mask;
    torch::Tensor gt_warp_clothing;

    int64_t size() const { return person.size(0); }
    TryOnBatch to(const torch::Device& device) const;
};

TryOnBatch collate(std::span<const TryOnSample> samples);

struct PairEntry {
    std::string person;
    std::string cloth;
};

/// Reads "person_name clothing_name" lines; blank lines and '#' comments are skipped.
std::vector<PairEntry> read_pairs(const std::filesystem::path& path);

/// Reads an 18-point pose JSON: either a bare array of [x, y, confidence] triples or
/// an OpenPose document with people[0].pose_keypoints(_2d).
Pose read_pose_json(const std::filesystem::path& path);

void write_pose_json(const std::filesystem::path& path, std::span<const Keypoint> pose);

/// VITON-style dataset directory:
///   image/ cloth/ cloth-mask/ image-parse/ pose/ and a pairs file.
class VitonDataset {
public:
    VitonDataset(std::filesystem::path root, std::vector<PairEntry> pairs,
                 int64_t height = kDefaultHeight, int64_t width = kDefaultWidth);

    static VitonDataset open(const std::filesystem::path& root, const std::string& pairs_file = "pairs.txt",
                             int64_t height = kDefaultHeight, int64_t width = kDefaultWidth);

    size_t size() const { return pairs_.size(); }
    const std::vector<PairEntry>& pairs() const { return pairs_; }
    const std::filesystem::path& root() const { return root_; }
    int64_t height() const { return height_; }
    int64_t width() const { return width_; }

    /// Loads and derives sample i; throws InvalidInput for unusable samples.
    TryOnSample get(size_t index) const;

    /// Loads a (person, cloth) combination that need not be listed in the pairs file.
    TryOnSample load(const std::string& person_name, const std::string& cloth_name) const;

    /// Path of an annotation for a person image, e.g. the parsing PNG or pose JSON.
    std::filesystem::path parsing_path(const std::string& person_name) const;
    std::filesystem::path pose_path(const std::string& person_name) const;
    std::filesystem::path cloth_mask_path(const std::string& cloth_name) const;

private:
    std::filesystem::path root_;
    std::vector<PairEntry> pairs_;
    int64_t height_;
    int64_t width_;
};

/// Loads a person/cloth pair given the image paths inside two VITON-style roots
/// (<root>/image/<name> and <root>/cloth/<name>); annotations are looked up next to them.
TryOnSample load_try_on_pair(const std::filesystem::path& person_image, const std::filesystem::path& cloth_image,
                             int64_t height = kDefaultHeight, int64_t width = kDefaultWidth);

}  // namespace plvton
