#pragma once

#include <cstdint>

#include "tracseg/data/dataset.hpp"

namespace tracseg::data {

/// Knobs of the synthetic multimodal tumour corpus.
///
/// Each patient gets one ellipsoidal lesion made of nested tissues: an outer
/// oedema shell, an enhancing rim and a necrotic core. Slices cut through the
/// ellipsoid, so slices near the ends of a patient show fewer tissues.
struct SyntheticConfig {
  int n_patients = 20;
  int slices_per_patient = 10;
  int classes = 3;  // non-background classes
  int image_size = 48;
  int channels = 4;
  std::uint64_t seed = 7;
  double noise_level = 0.05;
  double train_fraction = 0.7;
  double val_fraction = 0.15;

  void validate() const;
  nlohmann::json to_json() const;
};

DatasetSplits generate_synthetic(const SyntheticConfig& config);

/// Default tissue names for a 3-class corpus (index 0 is background).
std::vector<std::string> default_class_names(int classes);

/// Assigns patients to train/val/test deterministically from `seed`.
/// Returns one split per entry of `patient_ids` (same order).
std::vector<Split> assign_patient_splits(std::size_t n_patients, double train_fraction,
                                         double val_fraction, std::uint64_t seed);

}  // namespace tracseg::data
