#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "tracseg/common/errors.hpp"
#include "tracseg/data/synthetic.hpp"
#include "tracseg/faithfulness/faithfulness.hpp"
#include "tracseg/influence/explanation.hpp"

using namespace tracseg;
using namespace tracseg::faithfulness;

namespace {

// Model whose last hidden layer is the constant 1 and whose head puts every pixel in class 1.
segnet::UNet constant_model() {
  segnet::UNet model(testing::micro_model());
  auto p = model.parameters();
  const auto& layout = model.layout();
  const auto& hidden = layout[layout.size() - 2];
  std::fill(p.begin() + hidden.weight_offset, p.begin() + hidden.end(), 0.0);
  std::fill(p.begin() + hidden.bias_offset, p.begin() + hidden.end(), 1.0);
  const auto& head = model.output_layer();
  std::fill(p.begin() + head.weight_offset, p.begin() + head.end(), 0.0);
  p[head.bias_offset + 1] = 20.0;
  return model;
}

// Every test image of the class explained by every train image, with scores descending by train index.
std::vector<influence::ExplanationVector> explanations_for(const data::DatasetSplits& splits, int cls,
                                                           std::size_t max_tests = 100) {
  std::vector<influence::ExplanationVector> out;
  for (const auto& t : splits.test.items) {
    if (out.size() == max_tests) break;
    influence::ExplanationVector e;
    e.test_image_id = t.image.id;
    e.test_class = cls;
    double v = 0;
    for (const auto& s : splits.train.items) {
      for (int c = 1; c <= 3; ++c) {
        influence::InfluenceScore score;
        score.test_image_id = t.image.id;
        score.test_class = cls;
        score.train_image_id = s.image.id;
        score.train_class = c;
        score.value = v -= 1.0;
        e.scores.push_back(score);
      }
    }
    e.ranking = influence::rank_scores(e.scores);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<double> line(double from, double to, int n) {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = from + (to - from) * i / (n - 1);
  return out;
}

}  // namespace

TEST_SUITE("faithfulness") {

TEST_CASE("similarity values") {
  CHECK(similarity(0.7, 0.7) == doctest::Approx(1.0));
  CHECK(similarity(2, 1) == doctest::Approx(0.5));
  CHECK(similarity(-1, 1) == doctest::Approx(-1.0));
  CHECK(similarity(0, 0) == 0.0);
  CHECK(similarity(0, 3) == 0.0);
  CHECK(similarity(1, 2) == similarity(2, 1));
}

TEST_CASE("region max over full, empty and nested regions") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  segnet::Tensor hidden(3, 6, 6);
  for (auto& v : hidden.values) v = g(rng);
  const auto full = segnet::RegionMask::full(6, 6);
  const auto ch = hidden.channel(1);
  CHECK(*region_max(hidden, full, 1) == *std::max_element(ch.begin(), ch.end()));
  CHECK_FALSE(region_max(hidden, segnet::RegionMask{6, 6, std::vector<std::uint8_t>(36, 0)}, 1).has_value());
  CHECK_THROWS_AS(region_max(hidden, full, 3), ContractError);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 100; ++trial) {
    segnet::RegionMask b{6, 6, std::vector<std::uint8_t>(36, 0)}, a = b;
    for (std::size_t i = 0; i < 36; ++i) {
      b.inside[i] = coin(rng);
      a.inside[i] = b.inside[i] && coin(rng);
    }
    if (a.empty()) continue;
    for (int k = 0; k < 3; ++k) CHECK(*region_max(hidden, a, k) <= *region_max(hidden, b, k));
  }
}

TEST_CASE("curve classification rules") {
  const auto down = classify_curve(line(0.9, 0.1, 30));
  CHECK(down.shape == CurveShape::linear_negative);
  CHECK(down.predictive);
  CHECK(down.first_point == doctest::Approx(0.9));
  const auto weak = classify_curve(line(0.6, 0.1, 30));
  CHECK(weak.shape == CurveShape::linear_negative);
  CHECK_FALSE(weak.predictive);
  const auto flat = classify_curve(std::vector<double>(30, 0.5));
  CHECK(flat.shape == CurveShape::flat);
  CHECK_FALSE(flat.predictive);
  const auto up = classify_curve(line(0.1, 0.9, 30));
  CHECK(up.shape == CurveShape::linear_positive);
  CHECK_FALSE(up.predictive);

  std::vector<double> band(30, 0.9);
  for (int i = 10; i < 20; ++i) band[i] = 0.3;
  const auto sep = classify_curve(band);
  CHECK(sep.shape == CurveShape::band_separator);
  CHECK(sep.predictive);
  std::vector<double> bump(30, 0.2);
  for (int i = 10; i < 20; ++i) bump[i] = 0.9;
  const auto hump = classify_curve(bump);
  CHECK(hump.shape == CurveShape::band_separator);
  CHECK_FALSE(hump.predictive);  // ends low

  CHECK_THROWS_AS(classify_curve(line(0.9, 0.1, 19)), ContractError);
  CHECK(curve_shape_from_string(to_string(CurveShape::band_separator)) == CurveShape::band_separator);
}

TEST_CASE("constant similarity gives a flat FI curve") {
  const auto splits = data::generate_synthetic(testing::micro_corpus(12, 4, 16));
  const auto model = constant_model();
  const ActivationTable table(model, {&splits.train, &splits.test});
  const auto expls = explanations_for(splits, 1);
  const auto curve = feature_importance_curve(2, 1, expls, table);
  REQUIRE(curve.points.size() >= 20);
  for (double p : curve.points) CHECK(p == doctest::Approx(1.0));
  CHECK(curve.classification.shape == CurveShape::flat);
  CHECK_THROWS_AS(feature_importance_curve(2, 2, {}, table), ContractError);
}

TEST_CASE("a single test region yields its own ordered similarity sequence") {
  const auto splits = data::generate_synthetic(testing::micro_corpus(6, 4, 16));
  segnet::UNet model(testing::micro_model(4));
  auto p = model.parameters();
  p[model.output_layer().bias_offset] = 0.0;  // let foreground regions appear in the untrained model
  const ActivationTable table(model, {&splits.train, &splits.test}, 0.3);
  std::vector<influence::ExplanationVector> expls;
  int k = 0;
  for (auto& e : explanations_for(splits, 1)) {
    if (table.at(e.test_image_id, 1, 0)) {
      expls.push_back(std::move(e));
      break;
    }
  }
  REQUIRE(expls.size() == 1);
  const auto& e = expls.front();
  const double test_value = *table.at(e.test_image_id, 1, k);
  std::vector<double> expected;
  for (auto idx : e.ranking) {
    const auto v = table.at(e.scores[idx].train_image_id, e.scores[idx].train_class, k);
    if (v) expected.push_back(similarity(*v, test_value));
  }
  const auto curve = feature_importance_curve(k, 1, expls, table);
  REQUIRE(curve.points.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(curve.points[i] == doctest::Approx(expected[i]));
}

TEST_CASE("masking a dead filter has no impact") {
  const auto splits = data::generate_synthetic(testing::micro_corpus(6, 4, 16));
  segnet::UNet model(testing::micro_model(4));
  auto p = model.parameters();
  const auto& head = model.output_layer();
  const int dead = 1;
  for (int o = 0; o < head.out_channels; ++o) p[head.weight_offset + o * head.in_channels + dead] = 0.0;
  p[head.bias_offset] = 0.0;
  for (int c = 1; c <= 3; ++c) {
    const auto f = feature_impact(model, dead, c, splits.val);
    CHECK(f.value == 0.0);
  }
  CHECK_THROWS_AS(feature_impact(model, 99, 1, splits.val), ContractError);
}

TEST_CASE("selection of predictive features") {
  auto make_curve = [](int k, std::vector<double> points) {
    FeatureImportanceCurve c;
    c.feature = k;
    c.class_id = 1;
    c.points = std::move(points);
    c.positions = line(0.0, 1.0, static_cast<int>(c.points.size()));
    c.support.assign(c.points.size(), 1);
    c.classification = classify_curve(c.points);
    return c;
  };
  auto impact = [](int k, double v) { return FeatureImpact{k, 1, v, 10, false}; };

  const auto none = select_predictive_features(
      1, {make_curve(0, line(0.6, 0.1, 30)), make_curve(1, line(0.5, 0.0, 30))}, {impact(0, 0.1), impact(1, 0.2)});
  CHECK(none.predictive.empty());
  const auto flat = select_predictive_features(
      1, {make_curve(0, std::vector<double>(30, 0.9)), make_curve(1, std::vector<double>(30, 0.7))},
      {impact(0, 0.1), impact(1, 0.2)});
  CHECK(flat.predictive.empty());

  const auto some = select_predictive_features(
      1, {make_curve(0, line(0.9, 0.1, 30)), make_curve(1, std::vector<double>(30, 0.7)), make_curve(2, line(0.1, 0.9, 30))},
      {impact(0, 0.3), impact(1, 0.01), impact(2, 0.0)});
  CHECK(some.predictive == std::vector<int>{0});
  CHECK(some.predictive_impacts == std::vector<double>{0.3});
  CHECK(some.other_impacts.size() == 2);
  CHECK(some.impacts[0].predictive);

  testing::TempDir dir;
  write_feature_report(dir.path(), some, {});
  for (const char* f : {"curves.json", "impacts.csv", "scatter.csv", "histogram.json"})
    CHECK(std::filesystem::exists(dir / "1" / f));
}

}
