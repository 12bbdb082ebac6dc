#pragma once

#include <map>
#include <optional>
#include <string>

#include "tracseg/data/dataset.hpp"
#include "tracseg/segnet/regions.hpp"
#include "tracseg/segnet/train.hpp"
#include "tracseg/segnet/unet.hpp"

namespace tracseg::influence {

/// Which loss an oracle measures. Class 0 means the whole-slice Dice loss;
/// a foreground class means 1 - D_cls restricted to the region predicted at
/// the reference parameters, which stays fixed while parameters move.
struct LossTarget {
  int cls = 0;
  double threshold = segnet::kDefaultRegionThreshold;
};

/// Loss of `sample` under `target`. `region` overrides the predicted region.
double target_loss(const segnet::UNet& model, const data::Sample& sample, const LossTarget& target,
                   const segnet::RegionMask* region = nullptr);

/// Gradient of target_loss with respect to all parameters.
std::vector<double> target_loss_gradient(const segnet::UNet& model, const data::Sample& sample,
                                         const LossTarget& target, const segnet::RegionMask* region = nullptr);

/// L(z'; theta) - L(z'; theta - eta * grad L(z; theta)): the actual loss change
/// of z' after one descent step on z.
double one_step_oracle(const segnet::UNet& model, const data::Sample& z, const LossTarget& z_target,
                       const data::Sample& z_prime, const LossTarget& z_prime_target, double eta);

struct LooRecipe {
  segnet::UNetConfig model;
  segnet::TrainSchedule schedule;
};

/// Leave-one-out influence by retraining. The full-data model is trained once
/// and reused across queries.
class LooOracle {
 public:
  LooOracle(data::Dataset train_set, LooRecipe recipe);

  const segnet::UNet& full_model() const noexcept { return full_; }
  /// Model retrained without `removed_id` (memoized per id).
  const segnet::UNet& without(const std::string& removed_id);
  /// L(z'; theta) - L(z'; theta-bar) with theta-bar trained on the set minus `removed_id`.
  double influence(const std::string& removed_id, const data::Sample& z_prime, const LossTarget& target);

 private:
  data::Dataset train_set_;
  LooRecipe recipe_;
  segnet::UNet full_;
  std::map<std::string, segnet::UNet> reduced_;
};

double loo_oracle(const data::Dataset& train_set, const std::string& removed_id, const data::Sample& z_prime,
                  const LooRecipe& recipe, const LossTarget& target = {});

}  // namespace tracseg::influence
