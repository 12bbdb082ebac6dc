#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "tracseg/data/synthetic.hpp"
#include "tracseg/pipeline/pipeline.hpp"
#include "tracseg/segnet/train.hpp"
#include "tracseg/segnet/unet.hpp"

namespace tracseg::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "tracseg");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Small synthetic corpus (16x16 by default) for fast tests.
data::SyntheticConfig micro_corpus(int patients = 4, int slices = 4, int size = 16);

/// Depth-1, width-4 UNet: about 1.8k parameters.
segnet::UNetConfig micro_model(std::uint64_t seed = 3);

/// Short, deterministic schedule: 2 Adam epochs, then SGD up to `epochs`.
segnet::TrainSchedule micro_schedule(int epochs = 5);

/// End-to-end configuration on a 40-slice micro corpus, writing to `out`.
pipeline::RunConfig micro_run_config(const std::filesystem::path& out);

/// Random probability map (softmax of Gaussian logits).
segnet::ProbabilityMap random_probs(int classes, int h, int w, std::mt19937_64& rng);

/// Central difference relative error |a - b| / max(|a| + |b|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-8);

}  // namespace tracseg::testing
