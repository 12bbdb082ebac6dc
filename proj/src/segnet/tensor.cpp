#include "tracseg/segnet/tensor.hpp"

#include <algorithm>

namespace tracseg::segnet {

Tensor to_tensor(const data::MultimodalImage& image) {
  Tensor t(image.channels, image.height, image.width);
  std::copy(image.values.begin(), image.values.end(), t.values.begin());
  return t;
}

int RegionMask::count() const {
  return static_cast<int>(std::count(inside.begin(), inside.end(), std::uint8_t{1}));
}

}  // namespace tracseg::segnet
