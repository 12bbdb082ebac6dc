#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace tracseg::data {

/// A C-channel 2D slice; modalities are stored as channels in [C, H, W] order.
struct MultimodalImage {
  std::string id;
  std::string patient_id;
  int slice_index = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> values;

  std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
  float at(int c, int y, int x) const { return values[(c * plane()) + y * width + x]; }
  float& at(int c, int y, int x) { return values[(c * plane()) + y * width + x]; }
};

/// Integer class mask; label 0 is background, labels are mutually exclusive.
struct LabelMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> class_names;

  std::uint8_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  bool contains(int label) const;
  int pixel_count(int label) const;
};

struct Sample {
  MultimodalImage image;
  LabelMask mask;
};

enum class Split { train, val, test };

std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

/// Provenance of a dataset: where it came from and what was done to it.
struct Provenance {
  std::string source;
  std::uint64_t seed = 0;
  std::vector<std::string> preprocessing;
  nlohmann::json parameters = nlohmann::json::object();
};

struct Dataset {
  Split split = Split::train;
  std::vector<Sample> items;
  Provenance provenance;

  std::size_t n() const noexcept { return items.size(); }
  const Sample& by_id(std::string_view id) const;
  const Sample* find(std::string_view id) const;
};

/// The three disjoint-by-patient partitions of one corpus.
struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
  std::vector<std::string> class_names;
  Provenance provenance;

  const Dataset& get(Split split) const;
  Dataset& get(Split split);
  int channels() const;
  int height() const;
  int width() const;
  /// Number of non-background classes.
  int n_foreground_classes() const { return static_cast<int>(class_names.size()) - 1; }
};

/// Checks shape agreement, id uniqueness and patient-disjointness of the splits.
void validate(const DatasetSplits& splits);

/// Writes `<root>/manifest.json` plus `<root>/<split>/<id>.img|.msk`.
void save_dataset(const DatasetSplits& splits, const std::filesystem::path& root);
DatasetSplits load_dataset(const std::filesystem::path& root);

inline constexpr int kDatasetFormatVersion = 1;

}  // namespace tracseg::data
