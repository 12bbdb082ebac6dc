#include <doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "tracseg/common/errors.hpp"
#include "tracseg/common/raw_io.hpp"
#include "tracseg/common/stats.hpp"

using namespace tracseg;

TEST_SUITE("common") {

TEST_CASE("ranks give tied values their average position") {
  const std::vector<double> x{10, 20, 20, 30};
  const auto r = stats::ranks(x);
  CHECK(r == std::vector<double>{1, 2.5, 2.5, 4});
}

TEST_CASE("pearson and spearman on hand-computed data") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> y{2, 4, 6, 8, 10};
  CHECK(stats::pearson(x, y) == doctest::Approx(1.0));
  const std::vector<double> z{5, 4, 3, 2, 1};
  CHECK(stats::pearson(x, z) == doctest::Approx(-1.0));
  // Monotone but nonlinear: spearman is exactly 1, pearson is not.
  const std::vector<double> cube{1, 8, 27, 64, 125};
  CHECK(stats::spearman(x, cube) == doctest::Approx(1.0));
  CHECK(stats::pearson(x, cube) < 0.99);
  // deviations (-1,0,1) and (-1,1,0): cross sum 1, squared sums 2 and 2, r = 1/2
  CHECK(stats::pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}) == doctest::Approx(0.5));
}

TEST_CASE("auroc counts ties as one half") {
  CHECK(stats::auroc(std::vector<double>{3, 4}, std::vector<double>{1, 2}) == doctest::Approx(1.0));
  CHECK(stats::auroc(std::vector<double>{1}, std::vector<double>{1}) == doctest::Approx(0.5));
  // pairs: (2>1) (2<3) -> 1 of 2
  CHECK(stats::auroc(std::vector<double>{2}, std::vector<double>{1, 3}) == doctest::Approx(0.5));
}

TEST_CASE("exact Mann-Whitney p-value matches the combinatorial count") {
  // Every x above every y: U = 6, and only 1 of C(5,2) = 10 arrangements is as extreme.
  const auto r = stats::mann_whitney_greater(std::vector<double>{3, 4, 5}, std::vector<double>{1, 2});
  CHECK(r.exact);
  CHECK(r.u == doctest::Approx(6));
  CHECK(r.p_value == doctest::Approx(0.1));
  const auto flipped = stats::mann_whitney_greater(std::vector<double>{1, 2}, std::vector<double>{3, 4, 5});
  CHECK(flipped.p_value == doctest::Approx(1.0));
}

TEST_CASE("normal approximation is used with ties and agrees in direction") {
  std::vector<double> x, y;
  for (int i = 0; i < 30; ++i) {
    x.push_back(1.0 + (i % 5));
    y.push_back(0.0 + (i % 5));
  }
  const auto r = stats::mann_whitney_greater(x, y);
  CHECK_FALSE(r.exact);
  CHECK(r.p_value < 0.05);
  CHECK(stats::mann_whitney_greater(y, x).p_value > 0.9);
}

TEST_CASE("least squares recovers a line") {
  const std::vector<double> x{0, 1, 2, 3};
  const std::vector<double> y{1, 3, 5, 7};
  const auto fit = stats::least_squares(x, y);
  CHECK(fit.slope == doctest::Approx(2));
  CHECK(fit.intercept == doctest::Approx(1));
  CHECK(fit.r_squared == doctest::Approx(1));
}

TEST_CASE("raw f32 and u8 files round-trip and check their length") {
  testing::TempDir dir;
  const std::vector<float> f{1.5f, -2.25f, 3e-8f};
  io::write_f32(dir / "a.f32", f);
  CHECK(io::read_f32(dir / "a.f32") == f);
  CHECK_THROWS_AS(io::read_f32(dir / "a.f32", 4), CorruptFileError);
  const std::vector<std::uint8_t> u{0, 1, 255};
  io::write_u8(dir / "a.u8", u);
  CHECK(io::read_u8(dir / "a.u8", 3) == u);
  io::write_json(dir / "a.json", {{"k", 1}});
  CHECK(io::read_json(dir / "a.json").at("k") == 1);
}

}
