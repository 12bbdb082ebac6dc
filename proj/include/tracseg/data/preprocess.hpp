#pragma once

#include <random>
#include <utility>

#include "tracseg/data/dataset.hpp"

namespace tracseg::data {

/// Per-channel affine map of [min, max] onto [-1, 1]. Constant channels become 0.
MultimodalImage normalize_intensity(MultimodalImage image);

/// One draw of the augmentation policy. Crop window is in source pixels.
struct AugmentDecision {
  bool mirror = false;
  bool crop = false;
  int crop_y0 = 0;
  int crop_x0 = 0;
  int crop_h = 0;
  int crop_w = 0;

  bool is_identity() const noexcept { return !mirror && !crop; }
};

inline constexpr double kAugmentProbability = 0.5;
inline constexpr double kMinCropFraction = 0.85;

AugmentDecision draw_augmentation(int height, int width, std::mt19937_64& rng);

/// Applies the same spatial transform to image (bilinear) and mask (nearest).
std::pair<MultimodalImage, LabelMask> apply_augmentation(const MultimodalImage& image,
                                                         const LabelMask& mask,
                                                         const AugmentDecision& decision);

std::pair<MultimodalImage, LabelMask> augment(const MultimodalImage& image, const LabelMask& mask,
                                              std::mt19937_64& rng);

}  // namespace tracseg::data
