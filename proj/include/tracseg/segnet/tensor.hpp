#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tracseg/data/dataset.hpp"

namespace tracseg::segnet {

/// Dense [C, H, W] activation tensor in double precision.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Tensor() = default;
  Tensor(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), values(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const noexcept { return values.size(); }
  double& at(int c, int y, int x) { return values[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  double at(int c, int y, int x) const { return values[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  std::span<double> channel(int c) { return {values.data() + c * plane(), plane()}; }
  std::span<const double> channel(int c) const { return {values.data() + c * plane(), plane()}; }
};

/// Softmax output [n_classes, H, W]; every pixel's class vector sums to 1.
using ProbabilityMap = Tensor;

Tensor to_tensor(const data::MultimodalImage& image);

/// Binary per-pixel membership (0/1) over an H*W plane.
struct RegionMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> inside;

  int count() const;
  bool empty() const { return count() == 0; }
  static RegionMask full(int h, int w) { return {h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 1)}; }
};

}  // namespace tracseg::segnet
