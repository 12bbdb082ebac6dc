#include "tracseg/influence/oracle.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "tracseg/common/errors.hpp"
#include "tracseg/segnet/dice.hpp"

namespace tracseg::influence {

using segnet::Tensor;

namespace {

// Loss value and, when `grad` is given, its parameter gradient.
double evaluate_target(const segnet::UNet& model, const data::Sample& sample, const LossTarget& target,
                       const segnet::RegionMask* region, std::vector<double>* grad) {
  const auto pass = model.forward(segnet::to_tensor(sample.image));
  Tensor d_probs(pass.probs.channels, pass.probs.height, pass.probs.width);
  double loss = 0;
  bool differentiable = true;
  if (target.cls == 0) {
    const auto l = segnet::dice_loss_with_grad(pass.probs, sample.mask, d_probs);
    loss = l ? l->loss : 0.0;
    differentiable = l.has_value();
  } else {
    if (target.cls >= model.config().n_classes) throw ContractError("loss target class out of range");
    const auto own = region ? segnet::RegionMask{} : segnet::predict_region(pass.probs, target.cls, target.threshold);
    // Loss is 1 - D, so the Dice gradient enters with a negative scale.
    loss = 1.0 - segnet::region_dice(pass.probs, sample.mask, target.cls, region ? *region : own, &d_probs, -1.0);
  }
  if (grad) {
    grad->assign(model.parameter_count(), 0.0);
    if (differentiable) model.backward(pass, d_probs, *grad);
  }
  return loss;
}

segnet::RegionMask reference_region(const segnet::UNet& model, const data::Sample& sample, const LossTarget& t) {
  if (t.cls == 0) return {};
  return segnet::predict_region(model.predict(segnet::to_tensor(sample.image)), t.cls, t.threshold);
}

}  // namespace

double target_loss(const segnet::UNet& model, const data::Sample& sample, const LossTarget& target,
                   const segnet::RegionMask* region) {
  return evaluate_target(model, sample, target, region, nullptr);
}

std::vector<double> target_loss_gradient(const segnet::UNet& model, const data::Sample& sample,
                                         const LossTarget& target, const segnet::RegionMask* region) {
  std::vector<double> grad;
  evaluate_target(model, sample, target, region, &grad);
  return grad;
}

double one_step_oracle(const segnet::UNet& model, const data::Sample& z, const LossTarget& z_target,
                       const data::Sample& z_prime, const LossTarget& z_prime_target, double eta) {
  const auto z_region = reference_region(model, z, z_target);
  const auto zp_region = reference_region(model, z_prime, z_prime_target);
  const auto* zr = z_target.cls == 0 ? nullptr : &z_region;
  const auto* zpr = z_prime_target.cls == 0 ? nullptr : &zp_region;
  const auto grad = target_loss_gradient(model, z, z_target, zr);
  const double before = target_loss(model, z_prime, z_prime_target, zpr);
  segnet::UNet stepped = model;
  auto params = stepped.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= eta * grad[i];
  return before - target_loss(stepped, z_prime, z_prime_target, zpr);
}

LooOracle::LooOracle(data::Dataset train_set, LooRecipe recipe)
    : train_set_(std::move(train_set)), recipe_(std::move(recipe)), full_(recipe_.model) {
  if (train_set_.n() > 64) spdlog::warn("leave-one-out oracle on {} slices will retrain many times", train_set_.n());
  segnet::train(full_, train_set_, nullptr, recipe_.schedule);
}

const segnet::UNet& LooOracle::without(const std::string& removed_id) {
  if (auto it = reduced_.find(removed_id); it != reduced_.end()) return it->second;
  data::Dataset reduced = train_set_;
  const auto before = reduced.items.size();
  std::erase_if(reduced.items, [&](const data::Sample& s) { return s.image.id == removed_id; });
  if (reduced.items.size() == before) throw ContractError("'" + removed_id + "' is not in the train set");
  segnet::UNet model(recipe_.model);
  segnet::train(model, reduced, nullptr, recipe_.schedule);
  return reduced_.emplace(removed_id, std::move(model)).first->second;
}

double LooOracle::influence(const std::string& removed_id, const data::Sample& z_prime, const LossTarget& target) {
  const segnet::UNet& reduced = without(removed_id);
  // The region of a region target is taken from the full model so both losses see the same pixels.
  const auto region = reference_region(full_, z_prime, target);
  const auto* r = target.cls == 0 ? nullptr : &region;
  return target_loss(full_, z_prime, target, r) - target_loss(reduced, z_prime, target, r);
}

double loo_oracle(const data::Dataset& train_set, const std::string& removed_id, const data::Sample& z_prime,
                  const LooRecipe& recipe, const LossTarget& target) {
  LooOracle oracle(train_set, recipe);
  return oracle.influence(removed_id, z_prime, target);
}

}  // namespace tracseg::influence
