#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tracseg::render {

using Rgb = std::array<std::uint8_t, 3>;

/// PNG byte streams.
std::string encode_png_gray(int width, int height, std::span<const std::uint8_t> pixels);
std::string encode_png_rgb(int width, int height, std::span<const std::uint8_t> rgb);
/// Palette PNG; `alpha` (optional) gives per-palette-entry opacity.
std::string encode_png_indexed(int width, int height, std::span<const std::uint8_t> indices,
                               std::span<const Rgb> palette, std::span<const std::uint8_t> alpha = {});

/// Min-max scales to 0..255; a constant input maps to 0.
std::vector<std::uint8_t> to_gray8(std::span<const float> values);

/// Background transparent, then one color per class.
const std::vector<Rgb>& mask_palette();

/// Blue (negative) through white to red (positive); NaN maps to light grey.
Rgb diverging(double value, double max_abs);

}  // namespace tracseg::render
