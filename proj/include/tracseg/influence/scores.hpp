#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "tracseg/influence/gradient_cache.hpp"

namespace tracseg::influence {

/// A predicted region: one image and one foreground class.
struct RegionKey {
  std::string image_id;
  int cls = 0;

  bool operator==(const RegionKey&) const = default;
  auto operator<=>(const RegionKey&) const = default;
};

/// Every (image, class) of `image_ids` for classes 1..n_classes, image-major.
std::vector<RegionKey> region_keys(const std::vector<std::string>& image_ids, int n_classes);

/// Per-checkpoint dot products between two lists of regions.
///
/// term(t, r, c) is eta_t * grad(test r) . grad(train c), or 0 when either
/// region is absent at checkpoint t.
class ScoreBlock {
 public:
  ScoreBlock(std::size_t checkpoints, std::size_t rows, std::size_t cols);

  std::size_t checkpoints() const noexcept { return checkpoints_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& term(std::size_t t, std::size_t r, std::size_t c) { return terms_[index(t, r, c)]; }
  double term(std::size_t t, std::size_t r, std::size_t c) const { return terms_[index(t, r, c)]; }
  void set_present(std::size_t t, std::size_t r, std::size_t c) { present_[index(t, r, c)] = 1; }
  bool present(std::size_t t, std::size_t r, std::size_t c) const { return present_[index(t, r, c)] != 0; }

  std::vector<double> terms(std::size_t r, std::size_t c) const;
  /// Sum over checkpoints; nullopt when the pair is absent at every checkpoint.
  std::optional<double> value(std::size_t r, std::size_t c) const;

 private:
  std::size_t index(std::size_t t, std::size_t r, std::size_t c) const { return (t * rows_ + r) * cols_ + c; }

  std::size_t checkpoints_, rows_, cols_;
  std::vector<double> terms_;
  std::vector<unsigned char> present_;
};

/// Computes all scores between `test` and `train` regions from cached
/// gradients, one chunk of the parameter axis at a time.
ScoreBlock score_block(const GradientCache& cache, const std::vector<RegionKey>& test,
                       const std::vector<RegionKey>& train, std::size_t chunk = 16384);

}  // namespace tracseg::influence
