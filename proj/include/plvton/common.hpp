#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <torch/torch.h>

namespace plvton {

/// Raised when an operation receives arguments that violate its preconditions.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline void require(bool ok, const std::string& message) {
    if (!ok) throw InvalidInput(message);
}

/// Semantic classes of the 7-channel parsing layout.
enum class ParsingClass : int64_t {
    Background = 0,
    Hair = 1,
    Face = 2,
    UpperClothes = 3,
    LeftArm = 4,
    RightArm = 5,
    LowerBody = 6,
};

inline constexpr int64_t kNumParsingClasses = 7;
inline constexpr int64_t kNumKeypoints = 18;
inline constexpr int64_t kDefaultHeight = 256;
inline constexpr int64_t kDefaultWidth = 192;

inline constexpr int64_t class_index(ParsingClass c) { return static_cast<int64_t>(c); }

// Out-of-bounds / occlusion fill values.
inline constexpr double kMaskFill = 0.0;
inline constexpr double kShopFill = 1.0;
inline constexpr double kPersonFill = 0.5;

/// Adds a leading batch dimension to a C x H x W tensor; 4-D tensors pass through.
inline torch::Tensor as_batch(const torch::Tensor& t) {
    require(t.dim() == 3 || t.dim() == 4, "expected a C x H x W or N x C x H x W tensor");
    return t.dim() == 3 ? t.unsqueeze(0) : t;
}

/// Undoes as_batch when the original input was unbatched.
inline torch::Tensor restore_rank(const torch::Tensor& t, int64_t original_dim) {
    return original_dim == 3 ? t.squeeze(0) : t;
}

}  // namespace plvton
