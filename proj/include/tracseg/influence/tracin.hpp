#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tracseg::influence {

/// One region's gradient at one checkpoint; nullopt when the region is absent there.
using GradientView = std::optional<std::span<const float>>;

/// Dot product with double accumulation. Throws ContractError on length mismatch.
double dot(std::span<const float> a, std::span<const float> b);

/// Extended score for one (train region z_j, test region z'_i) pair.
struct InfluenceScore {
  std::string test_image_id;
  int test_class = 0;
  std::string train_image_id;
  int train_class = 0;
  std::optional<double> value;  // null when the pair is absent at every checkpoint
  std::vector<double> per_checkpoint_terms;

  bool is_null() const noexcept { return !value.has_value(); }
};

struct ScoreTerms {
  std::optional<double> value;
  std::vector<double> terms;
};

/// sum_t eta_t * grad D_j(z_j) . grad D_i(z'_i). A checkpoint where either region
/// is absent contributes a zero term; if that happens at every checkpoint the
/// score is null.
ScoreTerms tracin_extended(std::span<const GradientView> train_region, std::span<const GradientView> test_region,
                           std::span<const double> learning_rates);

/// Unsplit score: sum_t eta_t * sum_{i,j} grad D_j(z) . grad D_i(z'). Indexed
/// [checkpoint][class]; absent regions contribute nothing.
double tracin_baseline(const std::vector<std::vector<GradientView>>& train_image,
                       const std::vector<std::vector<GradientView>>& test_image,
                       std::span<const double> learning_rates);

}  // namespace tracseg::influence
