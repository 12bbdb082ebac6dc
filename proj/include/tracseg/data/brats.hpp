#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tracseg/data/dataset.hpp"

namespace tracseg::data {

struct BratsIngestOptions {
  int central_slices = 10;
  /// Volume axis the 2D slices are cut along (0 = x, 1 = y, 2 = z).
  int slice_axis = 2;
  /// In-plane centre crop; axes shorter than this are left alone.
  int crop_size = 192;
  std::vector<std::string> modalities{"t1", "t1ce", "t2", "flair"};
  std::string segmentation_suffix = "seg";
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  std::uint64_t seed = 7;
};

/// First index (0-based) of a centred window of `window` slices out of `extent`.
int central_window_start(int extent, int window);

/// BraTS label 4 (enhancing tumour) is stored as class 3; other labels pass through.
std::uint8_t remap_brats_label(double raw);

/// Reads `<root>/<patient>/<patient>_<modality>.nii[.gz]` for every patient directory.
DatasetSplits ingest_brats_layout(const std::filesystem::path& root, const BratsIngestOptions& options = {});

}  // namespace tracseg::data
