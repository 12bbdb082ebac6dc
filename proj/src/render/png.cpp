#include "tracseg/render/png.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tracseg/common/errors.hpp"

namespace tracseg::render {

namespace {

void append(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), n);
}

void flush(png_structp) {}

std::string encode(int width, int height, int color_type, int channels, std::span<const std::uint8_t> pixels,
                   std::span<const Rgb> palette = {}, std::span<const std::uint8_t> alpha = {}) {
  if (width <= 0 || height <= 0) throw ContractError("PNG dimensions must be positive");
  if (pixels.size() != static_cast<std::size_t>(width) * height * channels)
    throw ContractError("PNG pixel buffer has the wrong size");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  std::string out;
  std::vector<png_color> pal;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG encoding failed");
  }
  png_set_write_fn(png, &out, append, flush);
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    for (const auto& c : palette) pal.push_back({c[0], c[1], c[2]});
    png_set_PLTE(png, info, pal.data(), static_cast<int>(pal.size()));
    if (!alpha.empty())
      png_set_tRNS(png, info, const_cast<png_bytep>(alpha.data()), static_cast<int>(alpha.size()), nullptr);
  }
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  for (int y = 0; y < height; ++y) png_write_row(png, const_cast<png_bytep>(pixels.data() + y * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace

std::string encode_png_gray(int width, int height, std::span<const std::uint8_t> pixels) {
  return encode(width, height, PNG_COLOR_TYPE_GRAY, 1, pixels);
}

std::string encode_png_rgb(int width, int height, std::span<const std::uint8_t> rgb) {
  return encode(width, height, PNG_COLOR_TYPE_RGB, 3, rgb);
}

std::string encode_png_indexed(int width, int height, std::span<const std::uint8_t> indices,
                               std::span<const Rgb> palette, std::span<const std::uint8_t> alpha) {
  if (palette.empty() || palette.size() > 256) throw ContractError("palette must have 1..256 entries");
  for (auto i : indices)
    if (i >= palette.size()) throw ContractError("pixel index outside the palette");
  return encode(width, height, PNG_COLOR_TYPE_PALETTE, 1, indices, palette, alpha);
}

std::vector<std::uint8_t> to_gray8(std::span<const float> values) {
  std::vector<std::uint8_t> out(values.size(), 0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*hi <= *lo) return out;
  const double scale = 255.0 / (static_cast<double>(*hi) - *lo);
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround((values[i] - *lo) * scale));
  return out;
}

const std::vector<Rgb>& mask_palette() {
  static const std::vector<Rgb> palette{{0, 0, 0}, {230, 57, 70}, {69, 123, 157}, {244, 162, 97},
                                        {42, 157, 143}, {131, 56, 236}, {255, 190, 11}, {58, 134, 255},
                                        {128, 128, 128}};
  return palette;
}

Rgb diverging(double value, double max_abs) {
  if (std::isnan(value)) return {220, 220, 220};
  const double t = max_abs > 0 ? std::clamp(value / max_abs, -1.0, 1.0) : 0.0;
  auto mix = [](double a, double b, double s) { return static_cast<std::uint8_t>(std::lround(a + (b - a) * s)); };
  if (t >= 0) return {mix(255, 178, t), mix(255, 24, t), mix(255, 43, t)};
  return {mix(255, 33, -t), mix(255, 102, -t), mix(255, 172, -t)};
}

}  // namespace tracseg::render
