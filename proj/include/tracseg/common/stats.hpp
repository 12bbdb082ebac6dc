#pragma once

#include <span>
#include <vector>

namespace tracseg::stats {

double mean(std::span<const double> x);
double variance(std::span<const double> x);  // population variance

/// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> ranks(std::span<const double> x);

double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

/// Area under the ROC curve of `scores` for separating positives from negatives
/// (ties count one half).
double auroc(std::span<const double> positive_scores, std::span<const double> negative_scores);

struct MannWhitneyResult {
  double u = 0.0;        // U statistic of the first sample
  double p_value = 1.0;  // one-sided, alternative: first sample tends to be larger
  bool exact = false;
};

/// One-sided Mann-Whitney U test of "x stochastically greater than y".
/// Exact null distribution for small tie-free samples, otherwise the normal
/// approximation with tie and continuity corrections.
MannWhitneyResult mann_whitney_greater(std::span<const double> x, std::span<const double> y);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

LinearFit least_squares(std::span<const double> x, std::span<const double> y);

}  // namespace tracseg::stats
