#include "tracseg/segnet/dice.hpp"

#include "tracseg/common/errors.hpp"

namespace tracseg::segnet {

namespace {

void check_shapes(const ProbabilityMap& probs, const data::LabelMask& gt) {
  if (probs.height != gt.height || probs.width != gt.width || gt.labels.size() != probs.plane())
    throw ContractError("probability map and label mask shapes differ");
}

}  // namespace

double dice(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size()) throw ContractError("dice: prediction and ground truth shapes differ");
  double inter = 0, sp = 0, sg = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += pred[i] * gt[i];
    sp += pred[i];
    sg += gt[i];
  }
  return 2.0 * inter / (sp + sg + kDiceEpsilon);
}

std::optional<DiceLoss> dice_loss(const ProbabilityMap& probs, const data::LabelMask& gt) {
  check_shapes(probs, gt);
  DiceLoss out;
  const std::size_t hw = probs.plane();
  for (int c = 1; c < probs.channels; ++c) {
    double inter = 0, sp = 0, sg = 0;
    bool present = false;
    for (std::size_t i = 0; i < hw; ++i) {
      const double g = gt.labels[i] == c ? 1.0 : 0.0;
      present |= g > 0;
      const double pr = probs.values[c * hw + i];
      inter += pr * g;
      sp += pr;
      sg += g;
    }
    if (!present) continue;
    out.classes.push_back(c);
    out.class_dice.push_back(2.0 * inter / (sp + sg + kDiceEpsilon));
  }
  if (out.classes.empty()) return std::nullopt;
  double mean = 0;
  for (double d : out.class_dice) mean += d;
  out.loss = 1.0 - mean / static_cast<double>(out.class_dice.size());
  return out;
}

std::optional<DiceLoss> dice_loss_with_grad(const ProbabilityMap& probs, const data::LabelMask& gt,
                                            Tensor& d_probs) {
  auto result = dice_loss(probs, gt);
  if (!result) return result;
  if (d_probs.size() != probs.size()) throw ContractError("d_probs shape does not match probs");
  const std::size_t hw = probs.plane();
  const double weight = -1.0 / static_cast<double>(result->classes.size());
  for (int c : result->classes) {
    double inter = 0, sp = 0, sg = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      const double g = gt.labels[i] == c ? 1.0 : 0.0;
      const double pr = probs.values[c * hw + i];
      inter += pr * g;
      sp += pr;
      sg += g;
    }
    const double den = sp + sg + kDiceEpsilon;
    const double num = 2.0 * inter;
    for (std::size_t i = 0; i < hw; ++i) {
      const double g = gt.labels[i] == c ? 1.0 : 0.0;
      d_probs.values[c * hw + i] += weight * (2.0 * g * den - num) / (den * den);
    }
  }
  return result;
}

double region_dice(const ProbabilityMap& probs, const data::LabelMask& gt, int cls, const RegionMask& region,
                   Tensor* d_probs, double scale) {
  check_shapes(probs, gt);
  if (cls < 0 || cls >= probs.channels) throw ContractError("class index out of range");
  const std::size_t hw = probs.plane();
  if (region.inside.size() != hw) throw ContractError("region mask shape differs from probability map");
  double inter = 0, sp = 0, sg = 0;
  for (std::size_t i = 0; i < hw; ++i) {
    const double g = gt.labels[i] == cls ? 1.0 : 0.0;
    sg += g;
    if (!region.inside[i]) continue;
    const double pr = probs.values[cls * hw + i];
    inter += pr * g;
    sp += pr;
  }
  const double den = sp + sg + kDiceEpsilon;
  const double num = 2.0 * inter;
  if (d_probs) {
    if (d_probs->size() != probs.size()) throw ContractError("d_probs shape does not match probs");
    for (std::size_t i = 0; i < hw; ++i) {
      if (!region.inside[i]) continue;
      const double g = gt.labels[i] == cls ? 1.0 : 0.0;
      d_probs->values[cls * hw + i] += scale * (2.0 * g * den - num) / (den * den);
    }
  }
  return num / den;
}

double hard_dice(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> gt, int cls) {
  if (predicted.size() != gt.size()) throw ContractError("hard_dice: shapes differ");
  double inter = 0, sp = 0, sg = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const bool p = predicted[i] == cls, g = gt[i] == cls;
    inter += (p && g) ? 1.0 : 0.0;
    sp += p ? 1.0 : 0.0;
    sg += g ? 1.0 : 0.0;
  }
  return 2.0 * inter / (sp + sg + kDiceEpsilon);
}

std::vector<std::uint8_t> argmax_labels(const ProbabilityMap& probs) {
  const std::size_t hw = probs.plane();
  std::vector<std::uint8_t> out(hw, 0);
  for (std::size_t i = 0; i < hw; ++i) {
    int best = 0;
    for (int c = 1; c < probs.channels; ++c)
      if (probs.values[c * hw + i] > probs.values[best * hw + i]) best = c;
    out[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

}  // namespace tracseg::segnet
