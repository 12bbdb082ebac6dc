#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tracseg/segnet/unet.hpp"

namespace tracseg::segnet {

enum class OptimizerPhase { adam, sgd };

std::string_view to_string(OptimizerPhase phase);
OptimizerPhase phase_from_string(std::string_view name);

/// Model snapshot taken at the end of an epoch (1-based), with the learning
/// rate that was in effect during that epoch.
struct Checkpoint {
  int epoch = 0;
  std::vector<float> parameters;
  double learning_rate = 0.0;
  OptimizerPhase phase = OptimizerPhase::adam;
  double train_loss = 0.0;
  std::vector<double> val_dice;  // per foreground class; empty when no validation split

  UNet materialize(const UNetConfig& config) const;
};

struct CheckpointSet {
  UNetConfig model;
  std::vector<Checkpoint> checkpoints;
  std::vector<int> selection;  // epochs used for influence
  std::string run_id;

  const Checkpoint& at_epoch(int epoch) const;
  const Checkpoint& final() const;
  std::vector<const Checkpoint*> selected() const;
  /// Checks that the selection is nonempty, present and in the SGD phase.
  void validate_selection() const;
};

/// Default influence checkpoints: the first `count` epochs after the switch to SGD.
std::vector<int> default_selection(int sgd_switch_epoch, int total_epochs, int count = 5);

/// Parses "6,7,8,9,10" and ranges such as "6-10".
std::vector<int> parse_epoch_list(std::string_view text);

/// `<dir>/run.json` plus `epoch_NNN.f32` (raw little-endian float32) and
/// `epoch_NNN.json` sidecars.
void save_checkpoints(const CheckpointSet& set, const std::filesystem::path& dir);
CheckpointSet load_checkpoints(const std::filesystem::path& dir);

}  // namespace tracseg::segnet
