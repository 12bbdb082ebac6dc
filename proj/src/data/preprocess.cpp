#include "tracseg/data/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace tracseg::data {

MultimodalImage normalize_intensity(MultimodalImage image) {
  const std::size_t plane = image.plane();
  for (int c = 0; c < image.channels; ++c) {
    auto first = image.values.begin() + static_cast<std::ptrdiff_t>(c * plane);
    auto last = first + static_cast<std::ptrdiff_t>(plane);
    const auto [lo_it, hi_it] = std::minmax_element(first, last);
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) {
      std::fill(first, last, 0.0f);
      continue;
    }
    const double span = hi - lo;
    for (auto it = first; it != last; ++it)
      *it = static_cast<float>(2.0 * ((*it - lo) / span) - 1.0);
  }
  return image;
}

AugmentDecision draw_augmentation(int height, int width, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentDecision d;
  d.mirror = unit(rng) < kAugmentProbability;
  d.crop = unit(rng) < kAugmentProbability;
  const double fraction = kMinCropFraction + (1.0 - kMinCropFraction) * unit(rng);
  d.crop_h = std::clamp(static_cast<int>(std::ceil(fraction * height)), 1, height);
  d.crop_w = std::clamp(static_cast<int>(std::ceil(fraction * width)), 1, width);
  d.crop_y0 = std::uniform_int_distribution<int>(0, height - d.crop_h)(rng);
  d.crop_x0 = std::uniform_int_distribution<int>(0, width - d.crop_w)(rng);
  if (!d.crop) d = AugmentDecision{d.mirror, false, 0, 0, height, width};
  return d;
}

std::pair<MultimodalImage, LabelMask> apply_augmentation(const MultimodalImage& image,
                                                         const LabelMask& mask,
                                                         const AugmentDecision& d) {
  if (d.is_identity()) return {image, mask};
  const int h = image.height, w = image.width;
  const int ch = d.crop ? d.crop_h : h, cw = d.crop ? d.crop_w : w;
  const int y0 = d.crop ? d.crop_y0 : 0, x0 = d.crop ? d.crop_x0 : 0;

  MultimodalImage out_img = image;
  LabelMask out_mask = mask;
  // Output pixel centres are mapped back into the crop window (align-corners=false).
  const double sy = static_cast<double>(ch) / h, sx = static_cast<double>(cw) / w;
  for (int y = 0; y < h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(ch - 1));
    const int iy0 = static_cast<int>(std::floor(fy));
    const int iy1 = std::min(iy0 + 1, ch - 1);
    const double ty = fy - iy0;
    const int ny = std::clamp(static_cast<int>(std::floor((y + 0.5) * sy)), 0, ch - 1);
    for (int x = 0; x < w; ++x) {
      const int ox = d.mirror ? (w - 1 - x) : x;
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(cw - 1));
      const int ix0 = static_cast<int>(std::floor(fx));
      const int ix1 = std::min(ix0 + 1, cw - 1);
      const double tx = fx - ix0;
      const int nx = std::clamp(static_cast<int>(std::floor((x + 0.5) * sx)), 0, cw - 1);
      for (int c = 0; c < image.channels; ++c) {
        const double v00 = image.at(c, y0 + iy0, x0 + ix0), v01 = image.at(c, y0 + iy0, x0 + ix1);
        const double v10 = image.at(c, y0 + iy1, x0 + ix0), v11 = image.at(c, y0 + iy1, x0 + ix1);
        const double v = (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
        out_img.at(c, y, ox) = static_cast<float>(v);
      }
      out_mask.labels[static_cast<std::size_t>(y) * w + ox] = mask.at(y0 + ny, x0 + nx);
    }
  }
  return {std::move(out_img), std::move(out_mask)};
}

std::pair<MultimodalImage, LabelMask> augment(const MultimodalImage& image, const LabelMask& mask,
                                              std::mt19937_64& rng) {
  return apply_augmentation(image, mask, draw_augmentation(image.height, image.width, rng));
}

}  // namespace tracseg::data
