#include "tracseg/influence/region_gradient.hpp"

#include <fmt/format.h>

#include "tracseg/common/errors.hpp"
#include "tracseg/segnet/dice.hpp"

namespace tracseg::influence {

using segnet::Tensor;

std::vector<double> region_dice_gradient(const segnet::UNet& model, const data::Sample& sample, int cls,
                                         const segnet::RegionMask& region, GradScope scope) {
  const auto pass = model.forward(segnet::to_tensor(sample.image));
  Tensor d_probs(pass.probs.channels, pass.probs.height, pass.probs.width);
  segnet::region_dice(pass.probs, sample.mask, cls, region, &d_probs);
  std::vector<double> grad(model.gradient_size(scope), 0.0);
  model.backward(pass, d_probs, grad, scope);
  return grad;
}

std::vector<double> full_loss_gradient(const segnet::UNet& model, const data::Sample& sample, GradScope scope) {
  const auto pass = model.forward(segnet::to_tensor(sample.image));
  Tensor d_probs(pass.probs.channels, pass.probs.height, pass.probs.width);
  std::vector<double> grad(model.gradient_size(scope), 0.0);
  if (segnet::dice_loss_with_grad(pass.probs, sample.mask, d_probs)) model.backward(pass, d_probs, grad, scope);
  return grad;
}

std::vector<RegionGradient> region_gradients(const segnet::UNet& model, int epoch, const data::Sample& sample,
                                             const RegionGradientOptions& options) {
  const auto pass = model.forward(segnet::to_tensor(sample.image));
  const auto regions = segnet::predict_regions(pass.probs, options.threshold);
  std::vector<RegionGradient> out;
  for (int cls = 1; cls < model.config().n_classes; ++cls) {
    RegionGradient rg;
    rg.image_id = sample.image.id;
    rg.class_id = cls;
    rg.epoch = epoch;
    rg.region_pixel_count = regions[cls].count();
    if (rg.region_pixel_count > 0) {
      Tensor d_probs(pass.probs.channels, pass.probs.height, pass.probs.width);
      segnet::region_dice(pass.probs, sample.mask, cls, regions[cls], &d_probs);
      std::vector<double> grad(model.gradient_size(options.scope), 0.0);
      model.backward(pass, d_probs, grad, options.scope);
      rg.grad.emplace(grad.begin(), grad.end());
    }
    out.push_back(std::move(rg));
  }
  return out;
}

RegionGradient region_gradient(const segnet::UNet& model, int epoch, const data::Sample& sample, int cls,
                               const RegionGradientOptions& options) {
  if (cls < 1 || cls >= model.config().n_classes)
    throw ContractError(fmt::format("class {} is not a foreground class of this model", cls));
  const auto pass = model.forward(segnet::to_tensor(sample.image));
  const auto region = segnet::predict_region(pass.probs, cls, options.threshold);
  RegionGradient rg;
  rg.image_id = sample.image.id;
  rg.class_id = cls;
  rg.epoch = epoch;
  rg.region_pixel_count = region.count();
  if (rg.region_pixel_count == 0) return rg;
  Tensor d_probs(pass.probs.channels, pass.probs.height, pass.probs.width);
  segnet::region_dice(pass.probs, sample.mask, cls, region, &d_probs);
  std::vector<double> grad(model.gradient_size(options.scope), 0.0);
  model.backward(pass, d_probs, grad, options.scope);
  rg.grad.emplace(grad.begin(), grad.end());
  return rg;
}

RegionGradient region_gradient(const segnet::Checkpoint& checkpoint, const segnet::UNetConfig& config,
                               const data::Sample& sample, int cls, const RegionGradientOptions& options) {
  const segnet::UNet model = checkpoint.materialize(config);
  return region_gradient(model, checkpoint.epoch, sample, cls, options);
}

}  // namespace tracseg::influence
