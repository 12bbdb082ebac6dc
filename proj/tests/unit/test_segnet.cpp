#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "tracseg/common/errors.hpp"
#include "tracseg/data/synthetic.hpp"
#include "tracseg/segnet/checkpoint.hpp"
#include "tracseg/segnet/dice.hpp"
#include "tracseg/segnet/regions.hpp"
#include "tracseg/segnet/train.hpp"
#include "tracseg/segnet/unet.hpp"

using namespace tracseg;
using namespace tracseg::segnet;

namespace {

data::LabelMask striped_mask(int h, int w, int classes) {
  data::LabelMask m{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 0), {}};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.labels[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>((x + y) % (classes + 1));
  return m;
}

// Puts q on the GT pixels of each class and 1 - q on background there; soft Dice is then 2q / (1 + q).
ProbabilityMap map_with_dice(const data::LabelMask& gt, const std::vector<double>& target) {
  ProbabilityMap p(4, gt.height, gt.width);
  const std::size_t hw = p.plane();
  for (std::size_t i = 0; i < hw; ++i) {
    const int c = gt.labels[i];
    if (c == 0) {
      p.values[i] = 1.0;
      continue;
    }
    const double d = target[c - 1];
    const double q = d / (2.0 - d);
    p.values[c * hw + i] = q;
    p.values[i] = 1.0 - q;
  }
  return p;
}

double loss_of(const ProbabilityMap& p, const data::LabelMask& gt) { return dice_loss(p, gt)->loss; }

}  // namespace

TEST_SUITE("segnet") {

TEST_CASE("dice on binary masks") {
  std::vector<double> a(200, 0), b(200, 0);
  for (int i = 0; i < 100; ++i) a[i] = 1;
  for (int i = 50; i < 150; ++i) b[i] = 1;
  CHECK(dice(a, b) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(dice(a, a) == doctest::Approx(1.0).epsilon(1e-6));
  std::vector<double> c(200, 0);
  for (int i = 100; i < 200; ++i) c[i] = 1;
  CHECK(dice(a, c) == doctest::Approx(0.0));
  CHECK(dice(b, a) == dice(a, b));
  CHECK_THROWS_AS(dice(a, std::vector<double>(3, 0)), ContractError);
}

TEST_CASE("dice loss averages over the classes present in the ground truth") {
  const auto gt = striped_mask(8, 8, 3);
  CHECK(loss_of(map_with_dice(gt, {1, 1, 1}), gt) == doctest::Approx(0.0).epsilon(1e-6));
  const auto lossy = dice_loss(map_with_dice(gt, {0.90, 0.93, 0.93}), gt);
  REQUIRE(lossy);
  CHECK(lossy->loss == doctest::Approx(1.0 - 2.76 / 3.0).epsilon(1e-6));
  CHECK(lossy->loss == doctest::Approx(0.08).epsilon(1e-6));

  auto no3 = gt;
  for (auto& l : no3.labels)
    if (l == 3) l = 0;
  const auto partial = dice_loss(map_with_dice(no3, {1, 1, 0.5}), no3);
  REQUIRE(partial);
  CHECK(partial->classes == std::vector<int>{1, 2});
  CHECK(partial->loss == doctest::Approx(0.0).epsilon(1e-6));

  data::LabelMask empty{8, 8, std::vector<std::uint8_t>(64, 0), {}};
  CHECK_FALSE(dice_loss(map_with_dice(empty, {1, 1, 1}), empty).has_value());
}

TEST_CASE("dice loss gradient matches central differences") {
  std::mt19937_64 rng(21);
  const auto gt = striped_mask(8, 8, 3);
  std::uniform_int_distribution<std::size_t> coord(0, 4 * 64 - 1);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    auto p = testing::random_probs(4, 8, 8, rng);
    Tensor grad(4, 8, 8);
    dice_loss_with_grad(p, gt, grad);
    const std::size_t i = coord(rng);
    const double h = 1e-6, v = p.values[i];
    p.values[i] = v + h;
    const double up = loss_of(p, gt);
    p.values[i] = v - h;
    const double down = loss_of(p, gt);
    worst = std::max(worst, testing::relative_error(grad.values[i], (up - down) / (2 * h), 1e-7));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("region dice only differentiates inside the region") {
  std::mt19937_64 rng(4);
  auto p = testing::random_probs(4, 8, 8, rng);
  const auto gt = striped_mask(8, 8, 3);
  RegionMask region{8, 8, std::vector<std::uint8_t>(64, 0)};
  for (int i = 0; i < 20; ++i) region.inside[i] = 1;
  Tensor g(4, 8, 8);
  const double d = region_dice(p, gt, 2, region, &g);
  for (std::size_t i = 0; i < 64; ++i) {
    if (!region.inside[i]) CHECK(g.values[2 * 64 + i] == 0.0);
    CHECK(g.values[i] == 0.0);
  }
  const std::size_t k = 2 * 64 + 5;
  const double h = 1e-6, v = p.values[k];
  p.values[k] = v + h;
  const double up = region_dice(p, gt, 2, region);
  p.values[k] = v - h;
  const double down = region_dice(p, gt, 2, region);
  CHECK(testing::relative_error(g.values[k], (up - down) / (2 * h)) < 1e-5);
  CHECK(d > 0);
}

TEST_CASE("network gradient matches central differences") {
  auto cfg = testing::micro_model(9);
  UNet model(cfg);
  const auto splits = data::generate_synthetic(testing::micro_corpus(2, 3, 16));
  const data::Sample* sample = nullptr;
  for (const auto& s : splits.train.items)
    if (s.mask.contains(1)) sample = &s;
  REQUIRE(sample);
  const auto input = to_tensor(sample->image);
  auto loss = [&](const UNet& m) { return dice_loss(m.predict(input), sample->mask)->loss; };

  const auto pass = model.forward(input);
  Tensor d_probs(pass.probs.channels, pass.probs.height, pass.probs.width);
  dice_loss_with_grad(pass.probs, sample->mask, d_probs);
  std::vector<double> grad(model.parameter_count(), 0.0);
  model.backward(pass, d_probs, grad);

  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> pick(0, model.parameter_count() - 1);
  int checked = 0;
  for (int trial = 0; trial < 40 && checked < 15; ++trial) {
    const std::size_t i = pick(rng);
    const double h = 1e-5, v = model.parameters()[i];
    model.parameters()[i] = v + h;
    const double up = loss(model);
    model.parameters()[i] = v - h;
    const double down = loss(model);
    model.parameters()[i] = v;
    const double numeric = (up - down) / (2 * h);
    if (std::abs(numeric) < 1e-7 && std::abs(grad[i]) < 1e-7) continue;  // ReLU-dead coordinate
    CHECK(testing::relative_error(grad[i], numeric) < 1e-4);
    ++checked;
  }
  CHECK(checked >= 5);

  std::vector<double> head(model.gradient_size(GradScope::last_layer), 0.0);
  model.backward(pass, d_probs, head, GradScope::last_layer);
  const auto& out = model.output_layer();
  for (std::size_t i = 0; i < head.size(); ++i) CHECK(head[i] == doctest::Approx(grad[out.weight_offset + i]));
}

TEST_CASE("initialization is deterministic and input sizes are checked") {
  UNetConfig cfg;
  cfg.depth = 3;
  cfg.base_width = 4;
  cfg.seed = 5;
  UNet a(cfg), b(cfg);
  CHECK(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  CHECK_NOTHROW(a.check_input(4, 64, 64));
  CHECK_THROWS_AS(a.check_input(4, 63, 64), ConfigError);
  CHECK_THROWS_AS(a.check_input(3, 64, 64), ConfigError);
  const auto probs = a.predict(Tensor(4, 16, 16, 0.3));
  for (std::size_t i = 0; i < probs.plane(); ++i) {
    double sum = 0;
    for (int c = 0; c < 4; ++c) sum += probs.values[c * probs.plane() + i];
    CHECK(sum == doctest::Approx(1.0));
  }
}

TEST_CASE("regions use argmax and the confidence threshold") {
  ProbabilityMap p(4, 1, 2);
  const double px0[] = {0.05, 0.85, 0.05, 0.05}, px1[] = {0.1, 0.6, 0.2, 0.1};
  for (int c = 0; c < 4; ++c) {
    p.values[c * 2] = px0[c];
    p.values[c * 2 + 1] = px1[c];
  }
  const auto regions = predict_regions(p, 0.8);
  CHECK(regions[1].inside == std::vector<std::uint8_t>{1, 0});
  CHECK(regions[0].empty());
  CHECK(regions[2].empty());

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto q = testing::random_probs(4, 8, 8, rng);
    for (int c = 1; c < 4; ++c) {
      const auto strict = predict_region(q, c, 0.8), loose = predict_region(q, c, 0.5);
      for (std::size_t i = 0; i < 64; ++i)
        if (strict.inside[i]) CHECK(loose.inside[i]);
    }
  }
}

TEST_CASE("hard dice of perfect and background-only predictions") {
  const auto splits = data::generate_synthetic(testing::micro_corpus(2, 3, 16));
  std::vector<std::vector<std::uint8_t>> perfect, blank;
  for (const auto& s : splits.train.items) {
    perfect.push_back(s.mask.labels);
    blank.emplace_back(s.mask.labels.size(), 0);
  }
  const auto good = evaluate_predictions(perfect, splits.train, 4);
  const auto bad = evaluate_predictions(blank, splits.train, 4);
  for (int c = 0; c < 3; ++c) {
    if (good.slices[c] == 0) continue;
    CHECK(good.per_class[c] == doctest::Approx(1.0));
    CHECK(bad.per_class[c] == doctest::Approx(0.0));
  }
}

TEST_CASE("schedule selection and epoch lists") {
  TrainSchedule s;
  CHECK(s.selection() == std::vector<int>{6, 7, 8, 9, 10});
  CHECK(default_selection(5, 30) == std::vector<int>{6, 7, 8, 9, 10});
  CHECK(parse_epoch_list("6-8,10") == std::vector<int>{6, 7, 8, 10});
  CHECK_THROWS_AS(parse_epoch_list("6,,7"), ConfigError);
  CHECK_THROWS_AS(parse_epoch_list("x"), ConfigError);
  s.total_epochs = 5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.total_epochs = 30;
  s.checkpoint_epochs = {3};
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("training is deterministic and checkpoints round-trip") {
  const auto splits = data::generate_synthetic(testing::micro_corpus());
  const auto schedule = testing::micro_schedule(5);
  UNet a(testing::micro_model()), b(testing::micro_model());
  const auto set_a = train(a, splits.train, &splits.val, schedule);
  const auto set_b = train(b, splits.train, &splits.val, schedule);
  REQUIRE(set_a.checkpoints.size() == 5);
  CHECK(set_a.checkpoints.back().parameters == set_b.checkpoints.back().parameters);
  CHECK(set_a.selection == std::vector<int>{3, 4, 5});
  for (const auto* c : set_a.selected()) {
    CHECK(c->phase == OptimizerPhase::sgd);
    CHECK(c->learning_rate == doctest::Approx(schedule.sgd_lr));
  }
  CHECK(set_a.checkpoints.front().phase == OptimizerPhase::adam);

  testing::TempDir dir;
  save_checkpoints(set_a, dir / "ckpt");
  const auto back = load_checkpoints(dir / "ckpt");
  CHECK(back.model == set_a.model);
  CHECK(back.selection == set_a.selection);
  CHECK(back.checkpoints.size() == set_a.checkpoints.size());
  CHECK(back.at_epoch(4).parameters == set_a.at_epoch(4).parameters);
  CHECK(back.at_epoch(4).learning_rate == set_a.at_epoch(4).learning_rate);
  CHECK_THROWS_AS(back.at_epoch(40), ContractError);
}

}
