#include "tracseg/segnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "tracseg/common/errors.hpp"
#include "tracseg/data/preprocess.hpp"
#include "tracseg/segnet/dice.hpp"

namespace tracseg::segnet {

void TrainSchedule::validate() const {
  if (total_epochs < 1) throw ConfigError("total_epochs must be positive");
  if (sgd_switch_epoch < 0) throw ConfigError("sgd_switch_epoch must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(adam_lr > 0) || !(sgd_lr > 0)) throw ConfigError("learning rates must be positive");
  if (sgd_momentum < 0 || sgd_momentum >= 1) throw ConfigError("sgd_momentum must lie in [0, 1)");
  const auto sel = selection();
  if (sel.empty())
    throw ConfigError(fmt::format("schedule has no SGD checkpoints to select (total_epochs={}, sgd_switch_epoch={})",
                                  total_epochs, sgd_switch_epoch));
  for (int e : sel)
    if (e <= sgd_switch_epoch || e > total_epochs)
      throw ConfigError(fmt::format("checkpoint epoch {} is not an SGD epoch of this schedule", e));
}

std::vector<int> TrainSchedule::selection() const {
  if (!checkpoint_epochs.empty()) return checkpoint_epochs;
  return default_selection(sgd_switch_epoch, total_epochs);
}

nlohmann::json TrainSchedule::to_json() const {
  return {{"total_epochs", total_epochs}, {"sgd_switch_epoch", sgd_switch_epoch},
          {"adam_lr", adam_lr},           {"adam_weight_decay", adam_weight_decay},
          {"sgd_lr", sgd_lr},             {"sgd_momentum", sgd_momentum},
          {"batch_size", batch_size},     {"shuffle", shuffle},
          {"augment", augment},           {"seed", seed},
          {"checkpoint_epochs", selection()}};
}

nlohmann::json DiceTable::to_json() const { return {{"per_class", per_class}, {"slices", slices}}; }

DiceTable evaluate_predictions(const std::vector<std::vector<std::uint8_t>>& predicted, const data::Dataset& dataset,
                               int n_classes) {
  if (predicted.size() != dataset.n()) throw ContractError("one prediction per dataset item is required");
  DiceTable table;
  table.per_class.assign(static_cast<std::size_t>(n_classes - 1), 0.0);
  table.slices.assign(static_cast<std::size_t>(n_classes - 1), 0);
  for (std::size_t s = 0; s < dataset.n(); ++s) {
    const auto& gt = dataset.items[s].mask;
    for (int c = 1; c < n_classes; ++c) {
      if (!gt.contains(c)) continue;
      table.per_class[c - 1] += hard_dice(predicted[s], gt.labels, c);
      table.slices[c - 1] += 1;
    }
  }
  for (std::size_t c = 0; c < table.per_class.size(); ++c)
    if (table.slices[c] > 0) table.per_class[c] /= table.slices[c];
  return table;
}

DiceTable evaluate(const UNet& model, const data::Dataset& dataset, const FeatureMask* mask) {
  std::vector<std::vector<std::uint8_t>> predicted;
  predicted.reserve(dataset.n());
  for (const auto& s : dataset.items) predicted.push_back(argmax_labels(model.predict(to_tensor(s.image), mask)));
  return evaluate_predictions(predicted, dataset, model.config().n_classes);
}

namespace {

struct AdamState {
  std::vector<double> m, v;
  long step = 0;
};

}  // namespace

CheckpointSet train(UNet& model, const data::Dataset& train_set, const data::Dataset* val_set,
                    const TrainSchedule& schedule, const EpochCallback& on_epoch) {
  schedule.validate();
  if (train_set.items.empty()) throw ContractError("train split is empty");
  const auto& first = train_set.items.front().image;
  model.check_input(first.channels, first.height, first.width);

  CheckpointSet result;
  result.model = model.config();
  result.selection = schedule.selection();
  result.run_id = fmt::format("unet-d{}-w{}-seed{}-e{}", model.config().depth, model.config().base_width,
                              schedule.seed, schedule.total_epochs);

  const std::size_t n_params = model.parameter_count();
  auto params = model.parameters();
  AdamState adam{std::vector<double>(n_params, 0.0), std::vector<double>(n_params, 0.0), 0};
  std::vector<double> velocity(n_params, 0.0);
  std::vector<double> grad(n_params, 0.0);
  std::vector<std::size_t> order(train_set.n());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(schedule.seed);

  for (int epoch = 1; epoch <= schedule.total_epochs; ++epoch) {
    const bool use_adam = epoch <= schedule.sgd_switch_epoch;
    const double lr = use_adam ? schedule.adam_lr : schedule.sgd_lr;
    if (schedule.shuffle) std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0;
    int loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(schedule.batch_size));
      std::fill(grad.begin(), grad.end(), 0.0);
      int in_batch = 0;
      for (std::size_t b = start; b < stop; ++b) {
        const auto& sample = train_set.items[order[b]];
        data::MultimodalImage image;
        data::LabelMask mask;
        const data::MultimodalImage* im = &sample.image;
        const data::LabelMask* mk = &sample.mask;
        if (schedule.augment) {
          std::tie(image, mask) = data::augment(sample.image, sample.mask, rng);
          im = &image;
          mk = &mask;
        }
        const auto pass = model.forward(to_tensor(*im));
        Tensor d_probs(pass.probs.channels, pass.probs.height, pass.probs.width);
        const auto loss = dice_loss_with_grad(pass.probs, *mk, d_probs);
        if (!loss) continue;
        if (!std::isfinite(loss->loss))
          throw TrainingDiverged(fmt::format("non-finite loss at epoch {} on image {}", epoch, im->id));
        loss_sum += loss->loss;
        ++loss_count;
        ++in_batch;
        model.backward(pass, d_probs, grad);
      }
      if (in_batch == 0) continue;
      const double inv = 1.0 / in_batch;
      if (use_adam) {
        ++adam.step;
        const double bc1 = 1.0 - std::pow(schedule.adam_beta1, static_cast<double>(adam.step));
        const double bc2 = 1.0 - std::pow(schedule.adam_beta2, static_cast<double>(adam.step));
        for (std::size_t i = 0; i < n_params; ++i) {
          const double g = grad[i] * inv + schedule.adam_weight_decay * params[i];
          adam.m[i] = schedule.adam_beta1 * adam.m[i] + (1 - schedule.adam_beta1) * g;
          adam.v[i] = schedule.adam_beta2 * adam.v[i] + (1 - schedule.adam_beta2) * g * g;
          params[i] -= lr * (adam.m[i] / bc1) / (std::sqrt(adam.v[i] / bc2) + schedule.adam_eps);
        }
      } else {
        for (std::size_t i = 0; i < n_params; ++i) {
          velocity[i] = schedule.sgd_momentum * velocity[i] + grad[i] * inv;
          params[i] -= lr * velocity[i];
        }
      }
      for (std::size_t i = 0; i < n_params; ++i)
        if (!std::isfinite(params[i]))
          throw TrainingDiverged(fmt::format("non-finite parameter after a step at epoch {}", epoch));
    }

    EpochLog log;
    log.epoch = epoch;
    log.phase = use_adam ? OptimizerPhase::adam : OptimizerPhase::sgd;
    log.train_loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
    if (val_set && !val_set->items.empty()) log.val = evaluate(model, *val_set);

    Checkpoint ckpt;
    ckpt.epoch = epoch;
    ckpt.parameters = model.parameters_f32();
    ckpt.learning_rate = lr;
    ckpt.phase = log.phase;
    ckpt.train_loss = log.train_loss;
    ckpt.val_dice = log.val.per_class;
    result.checkpoints.push_back(std::move(ckpt));

    std::string dice_text;
    for (double d : log.val.per_class) dice_text += fmt::format(" {:.3f}", d);
    spdlog::info("epoch {:>3} [{}] lr={:.2e} train_loss={:.4f} val_dice:{}", epoch, to_string(log.phase), lr,
                 log.train_loss, dice_text);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

}  // namespace tracseg::segnet
