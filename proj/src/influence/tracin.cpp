#include "tracseg/influence/tracin.hpp"

#include <fmt/format.h>

#include "tracseg/common/errors.hpp"
#include "tracseg/influence/region_gradient.hpp"

namespace tracseg::influence {

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw ContractError(fmt::format("gradient length mismatch: {} vs {}", a.size(), b.size()));
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

ScoreTerms tracin_extended(std::span<const GradientView> train_region, std::span<const GradientView> test_region,
                           std::span<const double> learning_rates) {
  if (learning_rates.empty()) throw ContractError("checkpoint set is empty");
  if (train_region.size() != learning_rates.size() || test_region.size() != learning_rates.size())
    throw ContractError("one gradient per checkpoint is required for both regions");
  ScoreTerms out;
  out.terms.assign(learning_rates.size(), 0.0);
  bool any = false;
  double total = 0;
  for (std::size_t t = 0; t < learning_rates.size(); ++t) {
    if (!train_region[t] || !test_region[t]) continue;
    any = true;
    out.terms[t] = kInfluenceSign * learning_rates[t] * dot(*train_region[t], *test_region[t]);
    total += out.terms[t];
  }
  if (any) out.value = total;
  return out;
}

double tracin_baseline(const std::vector<std::vector<GradientView>>& train_image,
                       const std::vector<std::vector<GradientView>>& test_image, std::span<const double> learning_rates) {
  if (learning_rates.empty()) throw ContractError("checkpoint set is empty");
  if (train_image.size() != learning_rates.size() || test_image.size() != learning_rates.size())
    throw ContractError("one gradient set per checkpoint is required for both images");
  double total = 0;
  for (std::size_t t = 0; t < learning_rates.size(); ++t) {
    double term = 0;
    for (const auto& gj : train_image[t]) {
      if (!gj) continue;
      for (const auto& gi : test_image[t]) {
        if (!gi) continue;
        term += dot(*gj, *gi);
      }
    }
    total += kInfluenceSign * learning_rates[t] * term;
  }
  return total;
}

}  // namespace tracseg::influence
