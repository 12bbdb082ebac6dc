#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tracseg/data/brats.hpp"
#include "tracseg/data/synthetic.hpp"
#include "tracseg/faithfulness/faithfulness.hpp"
#include "tracseg/influence/explanation.hpp"
#include "tracseg/segnet/train.hpp"

namespace tracseg::pipeline {

/// Every knob of a run. Defaults reproduce the reference pipeline.
struct RunConfig {
  std::filesystem::path out = "bundle";
  /// Dataset directory to copy into the bundle before training; empty uses `<out>/dataset`.
  std::filesystem::path data;
  std::uint64_t seed = 7;

  data::SyntheticConfig synth;
  data::BratsIngestOptions ingest;
  segnet::UNetConfig model;
  segnet::TrainSchedule schedule;

  double threshold = segnet::kDefaultRegionThreshold;
  std::size_t global_k = influence::kGlobalExplainerTopK;
  double global_freq = influence::kGlobalExplainerThreshold;
  int top = 10;
  segnet::GradScope grad_scope = segnet::GradScope::all;
  int workers = 1;
  faithfulness::CurveRules curve_rules;
  /// Seal the bundle at the end of the faithfulness stage.
  bool seal = true;

  /// Copies `seed` into the synthetic, model and schedule seeds.
  void apply_seed();
};

void run_synth(const RunConfig& config);
void run_ingest(const RunConfig& config, const std::filesystem::path& brats_root);
void run_train(const RunConfig& config);
void run_eval(const RunConfig& config);
void run_influence(const RunConfig& config);
void run_self_influence(const RunConfig& config);
void run_faithfulness(const RunConfig& config);
void run_report(const RunConfig& config);

/// synth (unless a dataset exists or `data` is set), train, eval, influence,
/// self-influence, faithfulness, report.
void run_all(const RunConfig& config);

}  // namespace tracseg::pipeline
