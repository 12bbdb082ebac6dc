#include "tracseg/data/brats.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include <fmt/format.h>

#include "tracseg/common/errors.hpp"
#include "tracseg/data/nifti.hpp"
#include "tracseg/data/preprocess.hpp"
#include "tracseg/data/synthetic.hpp"

namespace tracseg::data {

namespace fs = std::filesystem;

int central_window_start(int extent, int window) {
  if (window < 1) throw ConfigError("central_slices must be positive");
  if (window > extent)
    throw ConfigError(fmt::format("central_slices={} exceeds volume extent {}", window, extent));
  return (extent - window) / 2;
}

std::uint8_t remap_brats_label(double raw) {
  const long v = std::lround(raw);
  if (v == 4) return 3;
  if (v < 0 || v > 3) throw IngestionError(fmt::format("unexpected BraTS label value {}", v));
  return static_cast<std::uint8_t>(v);
}

namespace {

std::optional<fs::path> find_volume(const fs::path& dir, const std::string& suffix) {
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    for (const std::string ext : {".nii", ".nii.gz"}) {
      const std::string tail = "_" + suffix + ext;
      if (name.size() >= tail.size() && name.compare(name.size() - tail.size(), tail.size(), tail) == 0)
        return entry.path();
    }
  }
  return std::nullopt;
}

// Maps (in-plane row, in-plane col, slice) to volume (x, y, z) for the chosen axis.
std::array<int, 3> volume_coords(int axis, int row, int col, int slice) {
  switch (axis) {
    case 0: return {slice, row, col};
    case 1: return {row, slice, col};
    default: return {row, col, slice};
  }
}

}  // namespace

DatasetSplits ingest_brats_layout(const fs::path& root, const BratsIngestOptions& options) {
  if (options.slice_axis < 0 || options.slice_axis > 2) throw ConfigError("slice_axis must be 0, 1 or 2");
  if (options.modalities.empty()) throw ConfigError("at least one modality is required");
  if (!fs::is_directory(root)) throw IngestionError("not a directory: " + root.string());

  std::vector<fs::path> patients;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) patients.push_back(entry.path());
  std::sort(patients.begin(), patients.end());
  if (patients.empty()) throw IngestionError("no patient directories under " + root.string());

  DatasetSplits out;
  out.class_names = default_class_names(3);
  out.provenance.source = "brats:" + root.string();
  out.provenance.seed = options.seed;
  out.provenance.preprocessing = {
      fmt::format("central_slices={} axis={}", options.central_slices, options.slice_axis),
      fmt::format("center_crop={}", options.crop_size), "label_remap 4->3", "normalize_intensity[-1,1]"};
  out.provenance.parameters = {{"central_slices", options.central_slices},
                               {"slice_axis", options.slice_axis},
                               {"crop_size", options.crop_size},
                               {"modalities", options.modalities}};
  out.train.split = Split::train;
  out.val.split = Split::val;
  out.test.split = Split::test;

  const auto splits =
      assign_patient_splits(patients.size(), options.train_fraction, options.val_fraction, options.seed);

  for (std::size_t p = 0; p < patients.size(); ++p) {
    const fs::path& dir = patients[p];
    const std::string patient_id = dir.filename().string();

    std::vector<std::string> missing;
    std::vector<fs::path> modality_paths;
    for (const auto& m : options.modalities) {
      auto found = find_volume(dir, m);
      if (!found) missing.push_back(m);
      else modality_paths.push_back(*found);
    }
    auto seg_path = find_volume(dir, options.segmentation_suffix);
    if (!seg_path) missing.push_back(options.segmentation_suffix);
    if (!missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      throw IngestionError("patient " + patient_id + " is missing volume(s): " + list);
    }

    std::vector<NiftiVolume> volumes;
    for (const auto& path : modality_paths) volumes.push_back(read_nifti(path));
    const NiftiVolume seg = read_nifti(*seg_path);
    for (std::size_t m = 0; m < volumes.size(); ++m) {
      if (volumes[m].shape != seg.shape)
        throw IngestionError(fmt::format("patient {}: modality '{}' shape {}x{}x{} differs from segmentation {}x{}x{}",
                                         patient_id, options.modalities[m], volumes[m].shape[0],
                                         volumes[m].shape[1], volumes[m].shape[2], seg.shape[0], seg.shape[1],
                                         seg.shape[2]));
    }

    const int axis = options.slice_axis;
    const int extent = seg.shape[axis];
    const int start = central_window_start(extent, options.central_slices);
    const int row_axis = axis == 0 ? 1 : 0;
    const int col_axis = axis == 2 ? 1 : 2;
    const int rows_full = seg.shape[row_axis], cols_full = seg.shape[col_axis];
    const int rows = std::min(options.crop_size, rows_full), cols = std::min(options.crop_size, cols_full);
    const int r0 = (rows_full - rows) / 2, c0 = (cols_full - cols) / 2;

    for (int s = start; s < start + options.central_slices; ++s) {
      Sample sample;
      auto& im = sample.image;
      im.id = fmt::format("{}_s{:03d}", patient_id, s);
      im.patient_id = patient_id;
      im.slice_index = s;
      im.channels = static_cast<int>(volumes.size());
      im.height = rows;
      im.width = cols;
      im.values.resize(static_cast<std::size_t>(im.channels) * rows * cols);
      sample.mask.height = rows;
      sample.mask.width = cols;
      sample.mask.labels.resize(static_cast<std::size_t>(rows) * cols);
      sample.mask.class_names = out.class_names;
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          const auto xyz = volume_coords(axis, r0 + r, c0 + c, s);
          for (int m = 0; m < im.channels; ++m)
            im.at(m, r, c) = static_cast<float>(volumes[m].at(xyz[0], xyz[1], xyz[2]));
          sample.mask.labels[static_cast<std::size_t>(r) * cols + c] =
              remap_brats_label(seg.at(xyz[0], xyz[1], xyz[2]));
        }
      }
      im = normalize_intensity(std::move(im));
      out.get(splits[p]).items.push_back(std::move(sample));
    }
  }
  for (Split sp : {Split::train, Split::val, Split::test}) out.get(sp).provenance = out.provenance;
  validate(out);
  return out;
}

}  // namespace tracseg::data
