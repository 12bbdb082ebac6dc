#include "tracseg/influence/scores.hpp"

#include <algorithm>

#include <Eigen/Dense>

#include "tracseg/common/errors.hpp"

namespace tracseg::influence {

std::vector<RegionKey> region_keys(const std::vector<std::string>& image_ids, int n_classes) {
  std::vector<RegionKey> keys;
  keys.reserve(image_ids.size() * static_cast<std::size_t>(n_classes));
  for (const auto& id : image_ids)
    for (int c = 1; c <= n_classes; ++c) keys.push_back({id, c});
  return keys;
}

ScoreBlock::ScoreBlock(std::size_t checkpoints, std::size_t rows, std::size_t cols)
    : checkpoints_(checkpoints),
      rows_(rows),
      cols_(cols),
      terms_(checkpoints * rows * cols, 0.0),
      present_(checkpoints * rows * cols, 0) {}

std::vector<double> ScoreBlock::terms(std::size_t r, std::size_t c) const {
  std::vector<double> out(checkpoints_);
  for (std::size_t t = 0; t < checkpoints_; ++t) out[t] = term(t, r, c);
  return out;
}

std::optional<double> ScoreBlock::value(std::size_t r, std::size_t c) const {
  bool any = false;
  double sum = 0;
  for (std::size_t t = 0; t < checkpoints_; ++t) {
    any |= present(t, r, c);
    sum += term(t, r, c);
  }
  if (!any) return std::nullopt;
  return sum;
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Copies columns [begin, begin + width) of every present gradient into `out`.
void gather(const std::vector<GradientView>& views, std::size_t begin, std::size_t width, RowMatrix& out) {
  out.setZero(static_cast<Eigen::Index>(views.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < views.size(); ++r) {
    if (!views[r]) continue;
    const float* src = views[r]->data() + begin;
    double* dst = out.row(static_cast<Eigen::Index>(r)).data();
    for (std::size_t k = 0; k < width; ++k) dst[k] = src[k];
  }
}

}  // namespace

ScoreBlock score_block(const GradientCache& cache, const std::vector<RegionKey>& test,
                       const std::vector<RegionKey>& train, std::size_t chunk) {
  if (cache.epochs().empty()) throw ContractError("checkpoint set is empty");
  if (chunk == 0) throw ContractError("chunk size must be positive");
  const std::size_t n_t = cache.epochs().size();
  ScoreBlock block(n_t, test.size(), train.size());
  const std::size_t p = cache.gradient_size();
  RowMatrix a, b;
  Eigen::MatrixXd acc;
  for (std::size_t t = 0; t < n_t; ++t) {
    std::vector<GradientView> test_views, train_views;
    for (const auto& k : test) test_views.push_back(cache.get(t, k.image_id, k.cls));
    for (const auto& k : train) train_views.push_back(cache.get(t, k.image_id, k.cls));
    acc.setZero(static_cast<Eigen::Index>(test.size()), static_cast<Eigen::Index>(train.size()));
    for (std::size_t begin = 0; begin < p; begin += chunk) {
      const std::size_t width = std::min(chunk, p - begin);
      gather(test_views, begin, width, a);
      gather(train_views, begin, width, b);
      acc.noalias() += a * b.transpose();
    }
    const double eta = cache.learning_rates()[t];
    for (std::size_t r = 0; r < test.size(); ++r) {
      if (!test_views[r]) continue;
      for (std::size_t c = 0; c < train.size(); ++c) {
        if (!train_views[c]) continue;
        block.set_present(t, r, c);
        block.term(t, r, c) = kInfluenceSign * eta * acc(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      }
    }
  }
  return block;
}

}  // namespace tracseg::influence
