#include "helpers.hpp"

#include <atomic>
#include <cmath>

#include <unistd.h>

namespace tracseg::testing {

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

data::SyntheticConfig micro_corpus(int patients, int slices, int size) {
  data::SyntheticConfig c;
  c.n_patients = patients;
  c.slices_per_patient = slices;
  c.image_size = size;
  c.train_fraction = 0.5;
  c.val_fraction = 0.25;
  c.seed = 11;
  return c;
}

segnet::UNetConfig micro_model(std::uint64_t seed) {
  segnet::UNetConfig c;
  c.depth = 1;
  c.base_width = 4;
  c.seed = seed;
  return c;
}

segnet::TrainSchedule micro_schedule(int epochs) {
  segnet::TrainSchedule s;
  s.total_epochs = epochs;
  s.sgd_switch_epoch = 2;
  s.batch_size = 2;
  s.adam_lr = 1e-2;
  s.checkpoint_epochs = {3, 4, 5};
  while (!s.checkpoint_epochs.empty() && s.checkpoint_epochs.back() > epochs) s.checkpoint_epochs.pop_back();
  return s;
}

pipeline::RunConfig micro_run_config(const std::filesystem::path& out) {
  pipeline::RunConfig c;
  c.out = out;
  c.synth = micro_corpus(8, 5, 16);
  c.model = micro_model();
  c.schedule = micro_schedule(8);
  c.schedule.checkpoint_epochs = {6, 7, 8};
  c.threshold = 0.5;
  return c;
}

segnet::ProbabilityMap random_probs(int classes, int h, int w, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  segnet::ProbabilityMap p(classes, h, w);
  const std::size_t hw = p.plane();
  for (std::size_t i = 0; i < hw; ++i) {
    double sum = 0;
    for (int c = 0; c < classes; ++c) {
      const double e = std::exp(gauss(rng));
      p.values[c * hw + i] = e;
      sum += e;
    }
    for (int c = 0; c < classes; ++c) p.values[c * hw + i] /= sum;
  }
  return p;
}

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
}

}  // namespace tracseg::testing
