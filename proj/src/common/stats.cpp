#include "tracseg/common/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tracseg::stats {

double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double m = mean(x);
  double s = 0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("pearson: need two equal-length samples");
  const double mx = mean(x), my = mean(y);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = ranks(x), ry = ranks(y);
  return pearson(rx, ry);
}

double auroc(std::span<const double> positive_scores, std::span<const double> negative_scores) {
  if (positive_scores.empty() || negative_scores.empty()) throw std::invalid_argument("auroc: empty class");
  double wins = 0;
  for (double p : positive_scores)
    for (double n : negative_scores) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return wins / (static_cast<double>(positive_scores.size()) * static_cast<double>(negative_scores.size()));
}

MannWhitneyResult mann_whitney_greater(std::span<const double> x, std::span<const double> y) {
  MannWhitneyResult res;
  const std::size_t n1 = x.size(), n2 = y.size();
  if (n1 == 0 || n2 == 0) return res;
  std::vector<double> all(x.begin(), x.end());
  all.insert(all.end(), y.begin(), y.end());
  const auto r = ranks(all);
  double r1 = 0;
  for (std::size_t i = 0; i < n1; ++i) r1 += r[i];
  res.u = r1 - static_cast<double>(n1) * (n1 + 1) / 2.0;

  std::vector<double> sorted = all;
  std::sort(sorted.begin(), sorted.end());
  const bool has_ties = std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();

  if (!has_ties && n1 * n2 <= 2500) {
    // counts[u] = number of rank arrangements with statistic u, built by the
    // standard recursion over sample sizes.
    const std::size_t max_u = n1 * n2;
    std::vector<std::vector<double>> prev(n2 + 1), cur(n2 + 1);
    for (std::size_t j = 0; j <= n2; ++j) prev[j].assign(1, 1.0);  // m = 0
    for (std::size_t m = 1; m <= n1; ++m) {
      cur[0].assign(1, 1.0);
      for (std::size_t j = 1; j <= n2; ++j) {
        cur[j].assign(m * j + 1, 0.0);
        // f(m, j, u) = f(m-1, j, u-j) + f(m, j-1, u)
        for (std::size_t u = 0; u <= m * j; ++u) {
          double v = 0;
          if (u >= j && u - j < prev[j].size()) v += prev[j][u - j];
          if (u < cur[j - 1].size()) v += cur[j - 1][u];
          cur[j][u] = v;
        }
      }
      std::swap(prev, cur);
    }
    const auto& dist = prev[n2];
    const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
    const auto u_obs = static_cast<std::size_t>(std::llround(res.u));
    double tail = 0;
    for (std::size_t u = u_obs; u <= max_u; ++u) tail += dist[u];
    res.p_value = tail / total;
    res.exact = true;
    return res;
  }

  const double n = static_cast<double>(n1 + n2);
  double tie_term = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  const double mu = static_cast<double>(n1) * n2 / 2.0;
  const double sigma2 = static_cast<double>(n1) * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)));
  if (sigma2 <= 0) return res;
  const double z = (res.u - mu - 0.5) / std::sqrt(sigma2);
  res.p_value = 0.5 * std::erfc(z / std::sqrt(2.0));
  return res;
}

LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("least_squares: need two points");
  const double mx = mean(x), my = mean(y);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit fit;
  if (sxx == 0) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy == 0 ? 0.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

}  // namespace tracseg::stats
