#pragma once

// Procedural VITON-format corpus: cartoon persons wearing textured upper garments,
// with matching flat shop images, cloth masks, 7-class parsing maps and 18-point poses.
// Used for fixtures, smoke runs and overfit experiments when no real dataset is at hand.

#include <cstdint>
#include <filesystem>

#include "plvton/dataio.hpp"

namespace plvton::synth {

struct SyntheticRecord {
    torch::Tensor person;    // 3 x H x W
    torch::Tensor clothing;  // 3 x H x W, white background
    torch::Tensor clothing_mask;
    torch::Tensor labels;  // H x W in 0..6
    Pose pose;
};

struct SyntheticOptions {
    int64_t height = kDefaultHeight;
    int64_t width = kDefaultWidth;
    uint64_t seed = 2023;
};

/// Deterministically renders record `index` of the corpus described by `options`.
SyntheticRecord generate(int64_t index, const SyntheticOptions& options = {});

/// Writes `count` records as a VITON-style directory: image/, cloth/, cloth-mask/,
/// image-parse/, pose/, pairs.txt (paired) and test_pairs.txt (person i with cloth i+1).
void write_dataset(const std::filesystem::path& root, int64_t count, const SyntheticOptions& options = {});

}  // namespace plvton::synth
