#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracseg/data/dataset.hpp"
#include "tracseg/influence/explanation.hpp"
#include "tracseg/segnet/regions.hpp"
#include "tracseg/segnet/unet.hpp"

namespace tracseg::faithfulness {

/// Max of feature map k of the last hidden layer over a region.
struct FeatureActivation {
  std::string image_id;
  int class_id = 0;
  int feature = 0;
  std::optional<double> value;  // null on an empty region
};

/// Max of `hidden` channel k over `region`; nullopt when the region is empty.
std::optional<double> region_max(const segnet::Tensor& hidden, const segnet::RegionMask& region, int k);

FeatureActivation feature_activation(const segnet::UNet& model, const data::Sample& sample, int cls, int k,
                                     double threshold = segnet::kDefaultRegionThreshold);

/// Activations of every feature for every foreground region of a set of images,
/// one forward pass per image.
class ActivationTable {
 public:
  ActivationTable() = default;
  ActivationTable(const segnet::UNet& model, const std::vector<const data::Dataset*>& datasets,
                  double threshold = segnet::kDefaultRegionThreshold);

  int features() const noexcept { return features_; }
  /// All K activations of (image, class); empty optional entries when the region is absent.
  const std::vector<std::optional<double>>& at(const std::string& image_id, int cls) const;
  std::optional<double> at(const std::string& image_id, int cls, int k) const;

 private:
  int features_ = 0;
  std::map<std::pair<std::string, int>, std::vector<std::optional<double>>> table_;
};

/// (a b) / max(|a|, |b|)^2, with S(0, 0) = 0.
double similarity(double a, double b);

enum class CurveShape { band_separator, flat, linear_negative, linear_positive, other };
std::string_view to_string(CurveShape shape);
CurveShape curve_shape_from_string(std::string_view name);

struct CurveRules {
  double flat_range = 0.1;
  double linear_r2 = 0.6;
  double band_gap = 0.15;
  double predictive_first = 0.65;
  std::size_t min_points = 20;
};

struct CurveClassification {
  CurveShape shape = CurveShape::other;
  double slope = 0;
  double r2 = 0;
  double first_point = 0;
  bool predictive = false;
};

/// Shape of an FI curve given its points in proponent-to-opponent order.
/// `positions` are the rank-normalized x values; evenly spaced when empty.
CurveClassification classify_curve(std::span<const double> points, std::span<const double> positions = {},
                                   const CurveRules& rules = {});

struct FeatureImportanceCurve {
  int feature = 0;
  int class_id = 0;
  std::vector<double> positions;  // rank-normalized, in [0, 1]
  std::vector<double> points;     // FI at each position
  std::vector<int> support;       // number of test regions averaged at each position
  CurveClassification classification;
};

/// FI curve of feature k for test class i from the test-region explanations.
/// Global explainers in `hide` are removed before ranking.
FeatureImportanceCurve feature_importance_curve(int k, int cls, const std::vector<influence::ExplanationVector>& explanations,
                                                const ActivationTable& activations,
                                                const influence::GlobalExplainerSet* hide = nullptr,
                                                const CurveRules& rules = {});

struct FeatureImpact {
  int feature = 0;
  int class_id = 0;
  double value = 0;  // mean hard-Dice drop on the validation split
  int slices = 0;
  bool predictive = false;
};

/// Impact of masking filter k on class i, averaged over validation slices containing class i.
FeatureImpact feature_impact(const segnet::UNet& model, int k, int cls, const data::Dataset& val_set);
/// All K x |Cl| impacts; entry [i-1][k].
std::vector<std::vector<FeatureImpact>> feature_impacts(const segnet::UNet& model, const data::Dataset& val_set);

struct ClassFeatureReport {
  int class_id = 0;
  std::vector<FeatureImportanceCurve> curves;
  std::vector<FeatureImpact> impacts;
  std::vector<int> predictive;
  std::vector<double> predictive_impacts, other_impacts;
  std::optional<double> mann_whitney_p;  // one-sided: predictive > other
};

ClassFeatureReport select_predictive_features(int cls, std::vector<FeatureImportanceCurve> curves,
                                              std::vector<FeatureImpact> impacts);

/// Writes `<dir>/<class>/curves.json`, `impacts.csv`, `scatter.csv`, `histogram.json`.
void write_feature_report(const std::filesystem::path& dir, const ClassFeatureReport& report, const CurveRules& rules);
nlohmann::json curves_to_json(const ClassFeatureReport& report, const CurveRules& rules);
nlohmann::json histogram_json(const ClassFeatureReport& report, int bins = 10);

}  // namespace tracseg::faithfulness
