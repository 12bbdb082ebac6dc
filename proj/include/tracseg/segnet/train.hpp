#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tracseg/data/dataset.hpp"
#include "tracseg/segnet/checkpoint.hpp"
#include "tracseg/segnet/unet.hpp"

namespace tracseg::segnet {

/// Two-phase recipe: Adam for the first `sgd_switch_epoch` epochs, plain SGD afterwards.
struct TrainSchedule {
  int total_epochs = 30;
  int sgd_switch_epoch = 5;
  double adam_lr = 1e-4;
  double adam_weight_decay = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double sgd_lr = 0.1;
  double sgd_momentum = 0.0;
  int batch_size = 10;
  bool shuffle = true;
  bool augment = true;
  std::uint64_t seed = 7;
  /// Influence checkpoints; empty means the first five SGD epochs.
  std::vector<int> checkpoint_epochs;

  void validate() const;
  std::vector<int> selection() const;
  nlohmann::json to_json() const;
};

/// Hard (argmax) Dice per foreground class, averaged over slices where the class is in the ground truth.
struct DiceTable {
  std::vector<double> per_class;  // index c-1 for class c
  std::vector<int> slices;        // number of slices that contributed, per class

  nlohmann::json to_json() const;
};

DiceTable evaluate_predictions(const std::vector<std::vector<std::uint8_t>>& predicted, const data::Dataset& dataset,
                               int n_classes);
DiceTable evaluate(const UNet& model, const data::Dataset& dataset, const FeatureMask* mask = nullptr);

struct EpochLog {
  int epoch = 0;
  OptimizerPhase phase = OptimizerPhase::adam;
  double train_loss = 0.0;
  DiceTable val;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains `model` in place and returns one checkpoint per epoch. Throws
/// TrainingDiverged on a non-finite loss and ConfigError when the schedule
/// leaves no SGD checkpoint to select.
CheckpointSet train(UNet& model, const data::Dataset& train_set, const data::Dataset* val_set,
                    const TrainSchedule& schedule, const EpochCallback& on_epoch = {});

}  // namespace tracseg::segnet
