#pragma once

#include <vector>

#include "tracseg/segnet/tensor.hpp"

namespace tracseg::segnet {

/// Confidence threshold a pixel's winning class probability must exceed.
inline constexpr double kDefaultRegionThreshold = 0.8;

/// Region of class i = pixels whose argmax is i and whose P_i exceeds `threshold`.
/// Entry 0 (background) is always empty; empty regions are valid results.
std::vector<RegionMask> predict_regions(const ProbabilityMap& probs, double threshold = kDefaultRegionThreshold);

RegionMask predict_region(const ProbabilityMap& probs, int cls, double threshold = kDefaultRegionThreshold);

}  // namespace tracseg::segnet
