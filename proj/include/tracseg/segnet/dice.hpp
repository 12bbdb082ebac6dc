#pragma once

#include <optional>
#include <span>
#include <vector>

#include "tracseg/data/dataset.hpp"
#include "tracseg/segnet/tensor.hpp"

namespace tracseg::segnet {

/// Smoothing term in every Dice denominator.
inline constexpr double kDiceEpsilon = 1e-6;

/// 2 * sum(pred * gt) / (sum(pred) + sum(gt) + eps). Soft predictions are allowed.
double dice(std::span<const double> pred, std::span<const double> gt);

/// Soft multiclass Dice loss averaged over the foreground classes present in `gt`.
struct DiceLoss {
  double loss = 0.0;
  std::vector<int> classes;          // foreground classes that entered the average
  std::vector<double> class_dice;    // D_i for each entry of `classes`
};

/// Returns nullopt when `gt` holds only background (the slice carries no loss).
std::optional<DiceLoss> dice_loss(const ProbabilityMap& probs, const data::LabelMask& gt);

/// Same as dice_loss and also accumulates d(loss)/d(probs) into `d_probs`.
std::optional<DiceLoss> dice_loss_with_grad(const ProbabilityMap& probs, const data::LabelMask& gt,
                                            Tensor& d_probs);

/// Soft Dice of class `cls` with the numerator and prediction-sum restricted to
/// `region`; the ground-truth sum runs over the whole slice. Optionally writes
/// dD/dprobs (zero outside the region and for other classes) into `d_probs`.
double region_dice(const ProbabilityMap& probs, const data::LabelMask& gt, int cls, const RegionMask& region,
                   Tensor* d_probs = nullptr, double scale = 1.0);

/// Hard Dice of class `cls` between an argmax prediction and the ground truth.
double hard_dice(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> gt, int cls);

/// Per-pixel argmax of a probability map.
std::vector<std::uint8_t> argmax_labels(const ProbabilityMap& probs);

}  // namespace tracseg::segnet
