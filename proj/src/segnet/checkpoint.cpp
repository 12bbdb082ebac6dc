#include "tracseg/segnet/checkpoint.hpp"

#include <algorithm>
#include <charconv>

#include <fmt/format.h>

#include "tracseg/common/errors.hpp"
#include "tracseg/common/raw_io.hpp"

namespace tracseg::segnet {

namespace fs = std::filesystem;

std::string_view to_string(OptimizerPhase phase) { return phase == OptimizerPhase::adam ? "adam" : "sgd"; }

OptimizerPhase phase_from_string(std::string_view name) {
  if (name == "adam") return OptimizerPhase::adam;
  if (name == "sgd") return OptimizerPhase::sgd;
  throw CorruptFileError("unknown optimizer phase '" + std::string(name) + "'");
}

UNet Checkpoint::materialize(const UNetConfig& config) const {
  UNet model(config);
  model.set_parameters(std::span<const float>(parameters));
  return model;
}

const Checkpoint& CheckpointSet::at_epoch(int epoch) const {
  for (const auto& c : checkpoints)
    if (c.epoch == epoch) return c;
  throw ContractError(fmt::format("no checkpoint for epoch {}", epoch));
}

const Checkpoint& CheckpointSet::final() const {
  if (checkpoints.empty()) throw ContractError("checkpoint set is empty");
  return *std::max_element(checkpoints.begin(), checkpoints.end(),
                           [](const Checkpoint& a, const Checkpoint& b) { return a.epoch < b.epoch; });
}

std::vector<const Checkpoint*> CheckpointSet::selected() const {
  validate_selection();
  std::vector<const Checkpoint*> out;
  for (int e : selection) out.push_back(&at_epoch(e));
  return out;
}

void CheckpointSet::validate_selection() const {
  if (selection.empty()) throw ContractError("checkpoint selection is empty (no SGD checkpoints available)");
  for (int e : selection) {
    const auto it = std::find_if(checkpoints.begin(), checkpoints.end(), [e](const Checkpoint& c) { return c.epoch == e; });
    if (it == checkpoints.end()) throw ContractError(fmt::format("selected epoch {} has no checkpoint", e));
    if (it->phase != OptimizerPhase::sgd)
      throw ContractError(fmt::format("selected epoch {} is not an SGD checkpoint", e));
    if (!(it->learning_rate > 0)) throw ContractError(fmt::format("epoch {} has a non-positive learning rate", e));
  }
}

std::vector<int> default_selection(int sgd_switch_epoch, int total_epochs, int count) {
  std::vector<int> out;
  for (int e = sgd_switch_epoch + 1; e <= std::min(total_epochs, sgd_switch_epoch + count); ++e) out.push_back(e);
  return out;
}

std::vector<int> parse_epoch_list(std::string_view text) {
  std::vector<int> out;
  auto parse_int = [&](std::string_view s) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v < 1)
      throw ConfigError("invalid epoch '" + std::string(s) + "' in list '" + std::string(text) + "'");
    return v;
  };
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    std::string_view item = text.substr(pos, comma - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item.empty()) throw ConfigError("empty entry in epoch list '" + std::string(text) + "'");
    const std::size_t dash = item.find('-');
    if (dash == std::string_view::npos) {
      out.push_back(parse_int(item));
    } else {
      const int lo = parse_int(item.substr(0, dash)), hi = parse_int(item.substr(dash + 1));
      if (hi < lo) throw ConfigError("descending range in epoch list");
      for (int e = lo; e <= hi; ++e) out.push_back(e);
    }
    pos = comma + 1;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void save_checkpoints(const CheckpointSet& set, const fs::path& dir) {
  fs::create_directories(dir);
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& c : set.checkpoints) {
    const std::string stem = fmt::format("epoch_{:03d}", c.epoch);
    io::write_f32(dir / (stem + ".f32"), c.parameters);
    io::write_json(dir / (stem + ".json"), {{"epoch", c.epoch},
                                            {"learning_rate", c.learning_rate},
                                            {"phase", to_string(c.phase)},
                                            {"parameter_count", c.parameters.size()},
                                            {"train_loss", c.train_loss},
                                            {"val_dice", c.val_dice}});
    epochs.push_back(c.epoch);
  }
  io::write_json(dir / "run.json", {{"run_id", set.run_id},
                                    {"model", set.model.to_json()},
                                    {"epochs", epochs},
                                    {"selected_epochs", set.selection}});
}

CheckpointSet load_checkpoints(const fs::path& dir) {
  if (!fs::exists(dir / "run.json")) throw PrerequisiteError("no checkpoint run at " + dir.string(), "train");
  const auto run = io::read_json(dir / "run.json");
  CheckpointSet set;
  set.run_id = run.at("run_id").get<std::string>();
  set.model = UNetConfig::from_json(run.at("model"));
  set.selection = run.at("selected_epochs").get<std::vector<int>>();
  const std::size_t expected = UNet(set.model).parameter_count();
  for (int epoch : run.at("epochs").get<std::vector<int>>()) {
    const std::string stem = fmt::format("epoch_{:03d}", epoch);
    const auto side = io::read_json(dir / (stem + ".json"));
    Checkpoint c;
    c.epoch = side.at("epoch");
    c.learning_rate = side.at("learning_rate");
    c.phase = phase_from_string(side.at("phase").get<std::string>());
    c.train_loss = side.value("train_loss", 0.0);
    c.val_dice = side.at("val_dice").get<std::vector<double>>();
    const std::size_t count = side.at("parameter_count");
    if (count != expected)
      throw CorruptFileError(fmt::format("{}: parameter_count {} does not match the model ({})", stem, count, expected));
    c.parameters = io::read_f32(dir / (stem + ".f32"), count);
    set.checkpoints.push_back(std::move(c));
  }
  return set;
}

}  // namespace tracseg::segnet
