#include "tracseg/faithfulness/faithfulness.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "tracseg/common/errors.hpp"
#include "tracseg/common/raw_io.hpp"
#include "tracseg/common/stats.hpp"
#include "tracseg/segnet/dice.hpp"

namespace tracseg::faithfulness {

std::optional<double> region_max(const segnet::Tensor& hidden, const segnet::RegionMask& region, int k) {
  if (k < 0 || k >= hidden.channels) throw ContractError(fmt::format("feature index {} out of range", k));
  const std::size_t hw = hidden.plane();
  if (region.inside.size() != hw) throw ContractError("region mask shape differs from the feature map");
  std::optional<double> best;
  for (std::size_t i = 0; i < hw; ++i) {
    if (!region.inside[i]) continue;
    const double v = hidden.values[k * hw + i];
    if (!best || v > *best) best = v;
  }
  return best;
}

FeatureActivation feature_activation(const segnet::UNet& model, const data::Sample& sample, int cls, int k,
                                     double threshold) {
  if (k < 0 || k >= model.hidden_features()) throw ContractError(fmt::format("feature index {} out of range", k));
  const auto pass = model.forward(segnet::to_tensor(sample.image));
  const auto region = segnet::predict_region(pass.probs, cls, threshold);
  return {sample.image.id, cls, k, region_max(pass.hidden, region, k)};
}

ActivationTable::ActivationTable(const segnet::UNet& model, const std::vector<const data::Dataset*>& datasets,
                                 double threshold)
    : features_(model.hidden_features()) {
  for (const auto* ds : datasets) {
    for (const auto& s : ds->items) {
      const auto pass = model.forward(segnet::to_tensor(s.image));
      const auto regions = segnet::predict_regions(pass.probs, threshold);
      for (int c = 1; c < model.config().n_classes; ++c) {
        std::vector<std::optional<double>> values(features_);
        for (int k = 0; k < features_; ++k) values[k] = region_max(pass.hidden, regions[c], k);
        table_[{s.image.id, c}] = std::move(values);
      }
    }
  }
}

const std::vector<std::optional<double>>& ActivationTable::at(const std::string& image_id, int cls) const {
  const auto it = table_.find({image_id, cls});
  if (it == table_.end()) throw ContractError(fmt::format("no activations for {} class {}", image_id, cls));
  return it->second;
}

std::optional<double> ActivationTable::at(const std::string& image_id, int cls, int k) const {
  const auto& v = at(image_id, cls);
  if (k < 0 || k >= static_cast<int>(v.size())) throw ContractError(fmt::format("feature index {} out of range", k));
  return v[k];
}

double similarity(double a, double b) {
  const double m = std::max(std::abs(a), std::abs(b));
  if (m == 0.0) return 0.0;
  return a * b / (m * m);
}

std::string_view to_string(CurveShape shape) {
  switch (shape) {
    case CurveShape::band_separator: return "band_separator";
    case CurveShape::flat: return "flat";
    case CurveShape::linear_negative: return "linear_negative";
    case CurveShape::linear_positive: return "linear_positive";
    case CurveShape::other: return "other";
  }
  return "other";
}

CurveShape curve_shape_from_string(std::string_view name) {
  for (auto s : {CurveShape::band_separator, CurveShape::flat, CurveShape::linear_negative,
                 CurveShape::linear_positive, CurveShape::other})
    if (to_string(s) == name) return s;
  throw CorruptFileError("unknown curve shape '" + std::string(name) + "'");
}

CurveClassification classify_curve(std::span<const double> points, std::span<const double> positions,
                                   const CurveRules& rules) {
  const std::size_t n = points.size();
  if (n < rules.min_points)
    throw ContractError(fmt::format("curve has {} points, at least {} are needed", n, rules.min_points));
  std::vector<double> x(positions.begin(), positions.end());
  if (x.empty()) {
    x.resize(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  } else if (x.size() != n) {
    throw ContractError("curve positions and points differ in length");
  }

  CurveClassification out;
  out.first_point = points.front();
  const auto [lo, hi] = std::minmax_element(points.begin(), points.end());
  const auto fit = stats::least_squares(x, points);
  out.slope = fit.slope;
  out.r2 = std::isfinite(fit.r_squared) ? fit.r_squared : 0.0;

  const std::size_t a = n / 3, b = 2 * n / 3;
  const double head = stats::mean(points.subspan(0, a));
  const double middle = stats::mean(points.subspan(a, b - a));
  const double tail = stats::mean(points.subspan(b));
  const bool ends_high = head - middle >= rules.band_gap && tail - middle >= rules.band_gap;
  const bool ends_low = middle - head >= rules.band_gap && middle - tail >= rules.band_gap;

  if (*hi - *lo < rules.flat_range) {
    out.shape = CurveShape::flat;
  } else if (out.r2 >= rules.linear_r2) {
    out.shape = out.slope < 0 ? CurveShape::linear_negative : CurveShape::linear_positive;
  } else if (ends_high || ends_low) {
    out.shape = CurveShape::band_separator;
  } else {
    out.shape = CurveShape::other;
  }
  const bool shape_ok = (out.shape == CurveShape::band_separator && ends_high) || out.shape == CurveShape::linear_negative;
  out.predictive = shape_ok && out.first_point > rules.predictive_first;
  return out;
}

FeatureImportanceCurve feature_importance_curve(int k, int cls, const std::vector<influence::ExplanationVector>& explanations,
                                                const ActivationTable& activations,
                                                const influence::GlobalExplainerSet* hide, const CurveRules& rules) {
  if (k < 0 || k >= activations.features()) throw ContractError(fmt::format("feature index {} out of range", k));
  // Similarity sequences in ranking order, one per test region with an activation.
  std::vector<std::vector<std::optional<double>>> sequences;
  bool any_test = false;
  for (const auto& e : explanations) {
    if (e.test_class != cls) continue;
    any_test = true;
    const auto test_value = activations.at(e.test_image_id, cls, k);
    if (!test_value) continue;
    std::vector<std::optional<double>> seq;
    for (std::size_t idx : e.filtered_ranking(hide)) {
      const auto& s = e.scores[idx];
      const auto train_value = activations.at(s.train_image_id, s.train_class, k);
      seq.push_back(train_value ? std::optional<double>(similarity(*train_value, *test_value)) : std::nullopt);
    }
    if (!seq.empty()) sequences.push_back(std::move(seq));
  }
  if (!any_test) throw ContractError(fmt::format("no test regions of class {}", cls));

  std::size_t longest = 0;
  for (const auto& s : sequences) longest = std::max(longest, s.size());
  std::vector<double> sum(longest, 0.0);
  std::vector<int> count(longest, 0);
  for (const auto& seq : sequences) {
    for (std::size_t r = 0; r < seq.size(); ++r) {
      if (!seq[r]) continue;
      const std::size_t bin =
          seq.size() == 1 ? 0
                          : static_cast<std::size_t>(std::llround(static_cast<double>(r) * (longest - 1) /
                                                                  static_cast<double>(seq.size() - 1)));
      sum[bin] += *seq[r];
      count[bin] += 1;
    }
  }

  FeatureImportanceCurve curve;
  curve.feature = k;
  curve.class_id = cls;
  for (std::size_t b = 0; b < longest; ++b) {
    if (count[b] == 0) continue;
    curve.positions.push_back(longest == 1 ? 0.0 : static_cast<double>(b) / static_cast<double>(longest - 1));
    curve.points.push_back(sum[b] / count[b]);
    curve.support.push_back(count[b]);
  }
  if (curve.points.size() >= rules.min_points)
    curve.classification = classify_curve(curve.points, curve.positions, rules);
  else if (!curve.points.empty())
    curve.classification.first_point = curve.points.front();
  return curve;
}

namespace {

std::vector<std::vector<std::uint8_t>> predict_all(const segnet::UNet& model, const data::Dataset& set,
                                                   const segnet::FeatureMask* mask) {
  std::vector<std::vector<std::uint8_t>> out;
  for (const auto& s : set.items) out.push_back(segnet::argmax_labels(model.predict(segnet::to_tensor(s.image), mask)));
  return out;
}

FeatureImpact impact_from(const std::vector<std::vector<std::uint8_t>>& base,
                          const std::vector<std::vector<std::uint8_t>>& masked, int k, int cls,
                          const data::Dataset& val_set) {
  FeatureImpact f;
  f.feature = k;
  f.class_id = cls;
  double sum = 0;
  for (std::size_t s = 0; s < val_set.n(); ++s) {
    const auto& gt = val_set.items[s].mask;
    if (!gt.contains(cls)) continue;
    sum += segnet::hard_dice(base[s], gt.labels, cls) - segnet::hard_dice(masked[s], gt.labels, cls);
    ++f.slices;
  }
  if (f.slices > 0) f.value = sum / f.slices;
  return f;
}

}  // namespace

FeatureImpact feature_impact(const segnet::UNet& model, int k, int cls, const data::Dataset& val_set) {
  const int K = model.hidden_features();
  if (k < 0 || k >= K) throw ContractError(fmt::format("feature index {} out of range", k));
  if (cls < 1 || cls >= model.config().n_classes) throw ContractError("class out of range");
  segnet::FeatureMask mask(K, 1.0);
  mask[k] = 0.0;
  return impact_from(predict_all(model, val_set, nullptr), predict_all(model, val_set, &mask), k, cls, val_set);
}

std::vector<std::vector<FeatureImpact>> feature_impacts(const segnet::UNet& model, const data::Dataset& val_set) {
  const int K = model.hidden_features();
  const int n_classes = model.config().n_classes - 1;
  const auto base = predict_all(model, val_set, nullptr);
  std::vector<std::vector<FeatureImpact>> out(n_classes);
  for (int k = 0; k < K; ++k) {
    segnet::FeatureMask mask(K, 1.0);
    mask[k] = 0.0;
    const auto masked = predict_all(model, val_set, &mask);
    for (int c = 1; c <= n_classes; ++c) out[c - 1].push_back(impact_from(base, masked, k, c, val_set));
  }
  return out;
}

ClassFeatureReport select_predictive_features(int cls, std::vector<FeatureImportanceCurve> curves,
                                              std::vector<FeatureImpact> impacts) {
  if (curves.size() != impacts.size()) throw ContractError("one impact per curve is required");
  ClassFeatureReport r;
  r.class_id = cls;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    if (curves[i].feature != impacts[i].feature) throw ContractError("curves and impacts are not aligned by feature");
    impacts[i].predictive = curves[i].classification.predictive;
    if (impacts[i].predictive) {
      r.predictive.push_back(curves[i].feature);
      r.predictive_impacts.push_back(impacts[i].value);
    } else {
      r.other_impacts.push_back(impacts[i].value);
    }
  }
  if (!r.predictive_impacts.empty() && !r.other_impacts.empty())
    r.mann_whitney_p = stats::mann_whitney_greater(r.predictive_impacts, r.other_impacts).p_value;
  r.curves = std::move(curves);
  r.impacts = std::move(impacts);
  return r;
}

nlohmann::json curves_to_json(const ClassFeatureReport& report, const CurveRules& rules) {
  nlohmann::json curves = nlohmann::json::array();
  for (const auto& c : report.curves) {
    curves.push_back({{"feature", c.feature},
                      {"positions", c.positions},
                      {"points", c.points},
                      {"support", c.support},
                      {"shape", c.points.size() >= rules.min_points ? nlohmann::json(to_string(c.classification.shape))
                                                                    : nlohmann::json(nullptr)},
                      {"slope", c.classification.slope},
                      {"r2", c.classification.r2},
                      {"first_proponent_fi", c.classification.first_point},
                      {"predictive", c.classification.predictive}});
  }
  return {{"class", report.class_id},
          {"rules",
           {{"flat_range", rules.flat_range},
            {"linear_r2", rules.linear_r2},
            {"band_gap", rules.band_gap},
            {"predictive_first", rules.predictive_first},
            {"min_points", rules.min_points}}},
          {"predictive", report.predictive},
          {"mann_whitney_p", report.mann_whitney_p ? nlohmann::json(*report.mann_whitney_p) : nlohmann::json(nullptr)},
          {"curves", curves}};
}

nlohmann::json histogram_json(const ClassFeatureReport& report, int bins) {
  std::vector<double> all = report.predictive_impacts;
  all.insert(all.end(), report.other_impacts.begin(), report.other_impacts.end());
  double lo = 0, hi = 1;
  if (!all.empty()) {
    lo = *std::min_element(all.begin(), all.end());
    hi = *std::max_element(all.begin(), all.end());
    if (hi <= lo) hi = lo + 1e-9;
  }
  auto histogram = [&](const std::vector<double>& v) {
    std::vector<int> counts(bins, 0);
    for (double x : v) counts[std::min(bins - 1, static_cast<int>((x - lo) / (hi - lo) * bins))] += 1;
    return counts;
  };
  std::vector<double> edges;
  for (int b = 0; b <= bins; ++b) edges.push_back(lo + (hi - lo) * b / bins);
  return {{"class", report.class_id},
          {"edges", edges},
          {"predictive", {{"values", report.predictive_impacts}, {"counts", histogram(report.predictive_impacts)}}},
          {"non_predictive", {{"values", report.other_impacts}, {"counts", histogram(report.other_impacts)}}},
          {"mann_whitney_p", report.mann_whitney_p ? nlohmann::json(*report.mann_whitney_p) : nlohmann::json(nullptr)}};
}

void write_feature_report(const std::filesystem::path& dir, const ClassFeatureReport& report, const CurveRules& rules) {
  const auto out = dir / std::to_string(report.class_id);
  std::filesystem::create_directories(out);
  io::write_json(out / "curves.json", curves_to_json(report, rules));
  std::string impacts = "k,F,predictive,slices\n";
  for (const auto& f : report.impacts)
    impacts += fmt::format("{},{},{},{}\n", f.feature, f.value, f.predictive ? 1 : 0, f.slices);
  io::write_text(out / "impacts.csv", impacts);
  std::string scatter = "k,position,fi,support\n";
  for (const auto& c : report.curves) {
    if (c.positions.size() != c.points.size() || c.support.size() != c.points.size())
      throw ContractError(fmt::format("curve of feature {} has inconsistent lengths", c.feature));
    for (std::size_t i = 0; i < c.points.size(); ++i)
      scatter += fmt::format("{},{},{},{}\n", c.feature, c.positions[i], c.points[i], c.support[i]);
  }
  io::write_text(out / "scatter.csv", scatter);
  io::write_json(out / "histogram.json", histogram_json(report));
}

}  // namespace tracseg::faithfulness
