#include <doctest.h>

#include <cmath>
#include <limits>

#include "tracseg/render/png.hpp"
#include "tracseg/render/svg.hpp"

using namespace tracseg::render;

namespace {

const std::string kSignature("\x89PNG\r\n\x1a\n", 8);

// Big-endian u32 at `offset`.
std::uint32_t be32(const std::string& s, std::size_t offset) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(s[offset])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(s[offset + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(s[offset + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(s[offset + 3]));
}

}  // namespace

TEST_SUITE("render") {

TEST_CASE("encoders write a PNG signature and the IHDR size") {
  const std::vector<std::uint8_t> gray(6 * 4, 128), rgb(6 * 4 * 3, 50), idx(6 * 4, 1);
  for (const auto& png : {encode_png_gray(6, 4, gray), encode_png_rgb(6, 4, rgb),
                          encode_png_indexed(6, 4, idx, mask_palette(), std::vector<std::uint8_t>{0, 255, 255, 255})}) {
    CHECK(png.substr(0, 8) == kSignature);
    CHECK(png.substr(12, 4) == "IHDR");
    CHECK(be32(png, 16) == 6);
    CHECK(be32(png, 20) == 4);
  }
  CHECK_THROWS(encode_png_gray(6, 4, std::vector<std::uint8_t>(3)));
}

TEST_CASE("gray scaling and the diverging map") {
  CHECK(to_gray8(std::vector<float>{0, 5, 10}) == std::vector<std::uint8_t>{0, 128, 255});
  CHECK(to_gray8(std::vector<float>{2, 2}) == std::vector<std::uint8_t>{0, 0});
  CHECK(diverging(0, 1) == Rgb{255, 255, 255});
  const auto hot = diverging(1, 1), cold = diverging(-1, 1);
  CHECK(hot[0] > hot[2]);
  CHECK(cold[2] > cold[0]);
  const auto nan = diverging(std::numeric_limits<double>::quiet_NaN(), 1);
  CHECK(nan[0] == nan[1]);
  CHECK(nan[0] < 255);
}

TEST_CASE("svg charts are well-formed documents") {
  const auto line = svg_line_chart("t", "x", "y", {Series{"a", {0, 1, 2}, {1, 0.5, 0.2}}}, false);
  CHECK(line.starts_with("<svg"));
  CHECK(line.find("</svg>") != std::string::npos);
  CHECK(line.find("<polyline") != std::string::npos);
  const std::vector<std::pair<std::string, std::vector<Bar>>> groups{{"core", {Bar{"core", 0.9}, Bar{"edema", 0.1}}}};
  const auto bars = svg_bar_chart("t", "y", groups);
  CHECK(bars.find("<rect") != std::string::npos);
}

}
