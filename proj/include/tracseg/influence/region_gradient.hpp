#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tracseg/data/dataset.hpp"
#include "tracseg/segnet/checkpoint.hpp"
#include "tracseg/segnet/regions.hpp"
#include "tracseg/segnet/unet.hpp"

namespace tracseg::influence {

using segnet::GradScope;

/// Sign applied to every influence score. Gradients are taken of the Dice
/// coefficient D (not of the loss 1 - D); since the two differ only by sign,
/// every dot product is unchanged and a positive score marks a proponent,
/// i.e. a train region whose descent step lowered the test region's loss.
inline constexpr double kInfluenceSign = +1.0;

/// Gradient of the region-restricted Dice D_j(z_j) at one checkpoint.
/// `grad` is absent when the predicted region is empty.
struct RegionGradient {
  std::string image_id;
  int class_id = 0;
  int epoch = 0;
  int region_pixel_count = 0;
  std::optional<std::vector<float>> grad;

  bool present() const noexcept { return grad.has_value(); }
};

struct RegionGradientOptions {
  double threshold = segnet::kDefaultRegionThreshold;
  GradScope scope = GradScope::all;
};

/// d D_cls / d theta in double precision, with the Dice numerator and
/// prediction sum restricted to `region` before differentiation.
std::vector<double> region_dice_gradient(const segnet::UNet& model, const data::Sample& sample, int cls,
                                         const segnet::RegionMask& region, GradScope scope = GradScope::all);

/// d L / d theta for the soft Dice loss of the whole slice (all present classes).
/// Returns an all-zero vector for background-only slices.
std::vector<double> full_loss_gradient(const segnet::UNet& model, const data::Sample& sample,
                                       GradScope scope = GradScope::all);

/// Region gradients of every foreground class from one forward pass.
/// Entry c-1 holds class c.
std::vector<RegionGradient> region_gradients(const segnet::UNet& model, int epoch, const data::Sample& sample,
                                             const RegionGradientOptions& options = {});

RegionGradient region_gradient(const segnet::UNet& model, int epoch, const data::Sample& sample, int cls,
                               const RegionGradientOptions& options = {});

/// Materializes the checkpoint and computes the region gradient.
/// Throws ContractError when the checkpoint does not fit `config`.
RegionGradient region_gradient(const segnet::Checkpoint& checkpoint, const segnet::UNetConfig& config,
                               const data::Sample& sample, int cls, const RegionGradientOptions& options = {});

}  // namespace tracseg::influence
