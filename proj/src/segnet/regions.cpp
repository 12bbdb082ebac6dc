#include "tracseg/segnet/regions.hpp"

#include "tracseg/common/errors.hpp"

namespace tracseg::segnet {

RegionMask predict_region(const ProbabilityMap& probs, int cls, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("region threshold must lie in (0, 1)");
  if (cls < 0 || cls >= probs.channels) throw ContractError("class index out of range");
  RegionMask region{probs.height, probs.width, std::vector<std::uint8_t>(probs.plane(), 0)};
  if (cls == 0) return region;
  const std::size_t hw = probs.plane();
  for (std::size_t i = 0; i < hw; ++i) {
    const double p = probs.values[cls * hw + i];
    if (!(p > threshold)) continue;
    bool is_max = true;
    for (int c = 0; c < probs.channels && is_max; ++c)
      if (c != cls && probs.values[c * hw + i] > p) is_max = false;
    region.inside[i] = is_max ? 1 : 0;
  }
  return region;
}

std::vector<RegionMask> predict_regions(const ProbabilityMap& probs, double threshold) {
  std::vector<RegionMask> out;
  out.reserve(static_cast<std::size_t>(probs.channels));
  for (int c = 0; c < probs.channels; ++c) out.push_back(predict_region(probs, c, threshold));
  return out;
}

}  // namespace tracseg::segnet
