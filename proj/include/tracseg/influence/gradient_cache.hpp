#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "tracseg/data/dataset.hpp"
#include "tracseg/influence/region_gradient.hpp"
#include "tracseg/influence/tracin.hpp"
#include "tracseg/segnet/checkpoint.hpp"

namespace tracseg::influence {

std::string_view to_string(GradScope scope);
GradScope grad_scope_from_string(std::string_view name);

struct GradientCacheOptions {
  double threshold = segnet::kDefaultRegionThreshold;
  GradScope scope = GradScope::all;
  int workers = 1;
};

/// Read-only view of a file mapped into memory.
class MappedFile {
 public:
  explicit MappedFile(const std::filesystem::path& path);
  ~MappedFile();
  MappedFile(const MappedFile&) = delete;
  MappedFile& operator=(const MappedFile&) = delete;

  std::span<const float> floats() const noexcept;

 private:
  void* data_ = nullptr;
  std::size_t size_ = 0;
};

/// Write-once store of region gradients for every (selected epoch, image, class).
///
/// Layout: `<dir>/<epoch>/<image_id>.<class>.f32` plus `<dir>/index.json`.
/// Absent regions have no file and are recorded as such in the index.
class GradientCache {
 public:
  /// Computes and writes every gradient, or reuses a compatible existing cache.
  static GradientCache build(const std::filesystem::path& dir, const segnet::CheckpointSet& checkpoints,
                             const std::vector<const data::Dataset*>& datasets,
                             const GradientCacheOptions& options = {});
  static GradientCache open(const std::filesystem::path& dir);

  const std::vector<int>& epochs() const noexcept { return epochs_; }
  const std::vector<double>& learning_rates() const noexcept { return learning_rates_; }
  double threshold() const noexcept { return threshold_; }
  GradScope scope() const noexcept { return scope_; }
  std::size_t gradient_size() const noexcept { return gradient_size_; }
  int n_classes() const noexcept { return n_classes_; }
  const std::filesystem::path& directory() const noexcept { return dir_; }

  bool contains(const std::string& image_id) const;
  /// Gradient of (image, class) at the checkpoint with position `t` in epochs().
  GradientView get(std::size_t t, const std::string& image_id, int cls) const;
  /// One view per selected checkpoint.
  std::vector<GradientView> stream(const std::string& image_id, int cls) const;
  int region_pixels(std::size_t t, const std::string& image_id, int cls) const;
  /// True when the region is present at one or more checkpoints.
  bool region_present(const std::string& image_id, int cls) const;

 private:
  struct Entry {
    int pixels = 0;
    std::shared_ptr<MappedFile> file;
  };
  using Key = std::tuple<std::size_t, std::string, int>;

  const Entry& entry(std::size_t t, const std::string& image_id, int cls) const;

  std::filesystem::path dir_;
  std::vector<int> epochs_;
  std::vector<double> learning_rates_;
  double threshold_ = 0;
  GradScope scope_ = GradScope::all;
  std::size_t gradient_size_ = 0;
  int n_classes_ = 0;
  std::map<Key, Entry> entries_;
};

inline constexpr int kGradientCacheFormatVersion = 1;

}  // namespace tracseg::influence
