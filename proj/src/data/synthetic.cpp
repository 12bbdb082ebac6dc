#include "tracseg/data/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "tracseg/common/errors.hpp"
#include "tracseg/data/preprocess.hpp"

namespace tracseg::data {

namespace {

// Tissue indices into the contrast table: 0 air, 1 healthy brain, then one per class.
constexpr int kAir = 0;
constexpr int kBrain = 1;

// Rows: T1, T1Gd, T2, FLAIR. Columns: air, brain, class 1 (core), 2 (oedema), 3 (enhancing).
constexpr std::array<std::array<double, 5>, 4> kContrast = {{
    {0.0, 0.55, 0.35, 0.45, 0.50},
    {0.0, 0.50, 0.20, 0.45, 0.95},
    {0.0, 0.40, 0.85, 0.75, 0.60},
    {0.0, 0.40, 0.55, 0.90, 0.60},
}};

struct Ellipse {
  double cy, cx, ry, rx, angle;

  bool inside(double y, double x, double scale) const {
    if (scale <= 0) return false;
    const double dy = y - cy, dx = x - cx;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * dx + s * dy) / (rx * scale);
    const double v = (-s * dx + c * dy) / (ry * scale);
    return u * u + v * v <= 1.0;
  }
};

// Outer-to-inner nesting order of labels.
std::vector<int> nesting_order(int classes) {
  if (classes == 3) return {2, 3, 1};
  std::vector<int> order(classes);
  for (int i = 0; i < classes; ++i) order[i] = i + 1;
  return order;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (n_patients < 1) throw ConfigError("n_patients must be positive");
  if (slices_per_patient < 1) throw ConfigError("slices_per_patient must be positive");
  if (classes < 1 || classes > 8) throw ConfigError("classes must be in [1, 8]");
  if (image_size < 16) throw ConfigError("image_size must be at least 16");
  if (channels < 1) throw ConfigError("channels must be positive");
  if (noise_level < 0) throw ConfigError("noise_level must be non-negative");
  if (train_fraction <= 0 || val_fraction < 0 || train_fraction + val_fraction > 1)
    throw ConfigError("split fractions must satisfy 0 < train, 0 <= val, train + val <= 1");
}

nlohmann::json SyntheticConfig::to_json() const {
  return {{"n_patients", n_patients},   {"slices_per_patient", slices_per_patient},
          {"classes", classes},         {"image_size", image_size},
          {"channels", channels},       {"seed", seed},
          {"noise_level", noise_level}, {"train_fraction", train_fraction},
          {"val_fraction", val_fraction}};
}

std::vector<std::string> default_class_names(int classes) {
  if (classes == 3) return {"background", "core", "edema", "enhancing"};
  std::vector<std::string> names{"background"};
  for (int i = 1; i <= classes; ++i) names.push_back(fmt::format("class{}", i));
  return names;
}

std::vector<Split> assign_patient_splits(std::size_t n_patients, double train_fraction,
                                         double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n_patients);
  for (std::size_t i = 0; i < n_patients; ++i) order[i] = i;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * n_patients));
  auto n_val = static_cast<std::size_t>(std::llround(val_fraction * n_patients));
  n_train = std::clamp<std::size_t>(n_train, 1, n_patients);
  n_val = std::min(n_val, n_patients - n_train);
  std::vector<Split> out(n_patients, Split::test);
  for (std::size_t r = 0; r < n_patients; ++r) {
    const std::size_t p = order[r];
    out[p] = r < n_train ? Split::train : (r < n_train + n_val ? Split::val : Split::test);
  }
  return out;
}

DatasetSplits generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const int size = config.image_size;
  const int n_tissues = 2 + config.classes;
  // Contrast table per channel; channels beyond the four standard modalities
  // get random but fixed profiles.
  std::vector<std::vector<double>> contrast(config.channels, std::vector<double>(n_tissues));
  for (int c = 0; c < config.channels; ++c) {
    for (int t = 0; t < n_tissues; ++t) {
      if (c < 4 && t < 5) {
        contrast[c][t] = kContrast[c][t];
      } else {
        contrast[c][t] = t == kAir ? 0.0 : uniform(0.2, 1.0);
      }
    }
  }

  DatasetSplits out;
  out.class_names = default_class_names(config.classes);
  out.provenance.source = "synthetic";
  out.provenance.seed = config.seed;
  out.provenance.preprocessing = {"normalize_intensity[-1,1]"};
  out.provenance.parameters = config.to_json();
  out.train.split = Split::train;
  out.val.split = Split::val;
  out.test.split = Split::test;

  const auto patient_split =
      assign_patient_splits(config.n_patients, config.train_fraction, config.val_fraction, config.seed);
  const auto order = nesting_order(config.classes);

  for (int p = 0; p < config.n_patients; ++p) {
    const std::string patient_id = fmt::format("p{:03d}", p);
    const Ellipse brain{size / 2.0 + uniform(-1, 1), size / 2.0 + uniform(-1, 1), size * uniform(0.42, 0.47),
                        size * uniform(0.38, 0.44), uniform(-0.2, 0.2)};
    // Lesion shells from outermost to innermost.
    const double cy = size / 2.0 + size * uniform(-0.1, 0.1);
    const double cx = size / 2.0 + size * uniform(-0.1, 0.1);
    std::vector<Ellipse> shells;
    double ry = size * uniform(0.2, 0.27), rx = size * uniform(0.2, 0.27);
    for (std::size_t k = 0; k < order.size(); ++k) {
      shells.push_back({cy + uniform(-0.5, 0.5), cx + uniform(-0.5, 0.5), ry, rx, uniform(0, std::numbers::pi)});
      const double shrink = uniform(0.55, 0.68);
      ry *= shrink;
      rx *= shrink;
    }
    const double z_extent = uniform(0.75, 1.05);
    const double gain = uniform(0.9, 1.1);
    std::vector<double> texture_phase(4);
    for (auto& ph : texture_phase) ph = uniform(0, 2 * std::numbers::pi);

    for (int s = 0; s < config.slices_per_patient; ++s) {
      const double z = config.slices_per_patient == 1
                           ? 0.0
                           : (s - (config.slices_per_patient - 1) / 2.0) / (config.slices_per_patient / 2.0);
      const double zz = z * z_extent;
      const double scale = zz * zz < 1.0 ? std::sqrt(1.0 - zz * zz) : 0.0;

      Sample sample;
      auto& im = sample.image;
      im.id = fmt::format("{}_s{:02d}", patient_id, s);
      im.patient_id = patient_id;
      im.slice_index = s;
      im.channels = config.channels;
      im.height = size;
      im.width = size;
      im.values.assign(static_cast<std::size_t>(config.channels) * size * size, 0.0f);
      auto& mask = sample.mask;
      mask.height = size;
      mask.width = size;
      mask.labels.assign(static_cast<std::size_t>(size) * size, 0);
      mask.class_names = out.class_names;

      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          int tissue = brain.inside(y, x, 1.0) ? kBrain : kAir;
          int label = 0;
          if (tissue == kBrain) {
            for (std::size_t k = 0; k < shells.size(); ++k) {
              if (shells[k].inside(y, x, scale)) label = order[k];
            }
            if (label > 0) tissue = 1 + label;
          }
          mask.labels[static_cast<std::size_t>(y) * size + x] = static_cast<std::uint8_t>(label);
          const double texture =
              tissue == kAir ? 0.0
                             : 0.04 * std::sin(0.21 * x + texture_phase[0]) * std::cos(0.17 * y + texture_phase[1]);
          for (int c = 0; c < config.channels; ++c) {
            double v = gain * contrast[c][tissue] + texture + config.noise_level * gauss(rng);
            im.at(c, y, x) = static_cast<float>(v);
          }
        }
      }
      im = normalize_intensity(std::move(im));
      out.get(patient_split[p]).items.push_back(std::move(sample));
    }
  }
  for (Split sp : {Split::train, Split::val, Split::test}) out.get(sp).provenance = out.provenance;
  validate(out);
  return out;
}

}  // namespace tracseg::data
