#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracseg/data/dataset.hpp"
#include "tracseg/influence/scores.hpp"
#include "tracseg/influence/tracin.hpp"

namespace tracseg::influence {

class GlobalExplainerSet;

/// All scores of one test region against every (train image, class) slot.
struct ExplanationVector {
  std::string test_image_id;
  int test_class = 0;
  /// n x |Cl| slots, train-image-major then class, null entries included.
  std::vector<InfluenceScore> scores;
  /// Indices into `scores` of the non-null entries, highest score first.
  /// Ties are broken by train image id, then class.
  std::vector<std::size_t> ranking;

  std::size_t dimension() const noexcept { return scores.size(); }
  /// Ranking with flagged global explainers removed when `hide` is given.
  std::vector<std::size_t> filtered_ranking(const GlobalExplainerSet* hide = nullptr) const;
  std::vector<const InfluenceScore*> proponents(std::size_t k, const GlobalExplainerSet* hide = nullptr) const;
  std::vector<const InfluenceScore*> opponents(std::size_t k, const GlobalExplainerSet* hide = nullptr) const;
};

/// Sorts `scores` into a ranking; used by every constructor of ExplanationVector.
std::vector<std::size_t> rank_scores(const std::vector<InfluenceScore>& scores);

/// Explanation vectors for every (test image, class) from cached gradients.
/// Output order is test-image-major, then class.
std::vector<ExplanationVector> explanation_vectors(const GradientCache& cache,
                                                   const std::vector<std::string>& test_ids,
                                                   const std::vector<std::string>& train_ids);

/// Same quantity recomputed directly from checkpoints, without a cache.
ExplanationVector explanation_vector_from_scratch(const segnet::CheckpointSet& checkpoints,
                                                  const data::Dataset& train_set, const data::Sample& test,
                                                  int test_class, const RegionGradientOptions& options = {});

/// Influence of the train set on itself for one class i acting as test.
struct TrainInfluenceMatrix {
  int cls = 0;
  std::vector<std::string> image_ids;  // row order, and column order inside each block
  int n_classes = 0;
  std::size_t rows = 0, cols = 0;      // n x (|Cl| * n)
  std::vector<double> values;          // row-major; NaN where null
  std::vector<unsigned char> null_mask;

  std::optional<double> at(std::size_t row, int train_class, std::size_t train_row) const;
  std::size_t column(int train_class, std::size_t train_row) const;
  /// Mean of the non-null entries of block j.
  std::optional<double> block_mean(int train_class) const;
};

/// One matrix per class, sharing a single pass over the gradient cache.
std::vector<TrainInfluenceMatrix> train_influence_matrices(const GradientCache& cache,
                                                           const std::vector<std::string>& train_ids);

struct SelfInfluence {
  std::string image_id;
  std::vector<std::optional<double>> per_class;  // index c-1 for class c
  std::optional<double> total;                   // sum over present classes
};

std::vector<SelfInfluence> self_influences(const GradientCache& cache, const std::vector<std::string>& image_ids);

struct TrainSlot {
  std::string train_image_id;
  int train_class = 0;
  auto operator<=>(const TrainSlot&) const = default;
};

/// Train slots that rank among the top-k proponents or opponents of many test regions.
class GlobalExplainerSet {
 public:
  GlobalExplainerSet() = default;
  GlobalExplainerSet(std::map<TrainSlot, double> frequency, double threshold, std::size_t k);

  bool contains(const std::string& train_image_id, int train_class) const;
  const std::set<TrainSlot>& flagged() const noexcept { return flagged_; }
  const std::map<TrainSlot, double>& frequency() const noexcept { return frequency_; }
  double threshold() const noexcept { return threshold_; }
  std::size_t k() const noexcept { return k_; }

  nlohmann::json to_json() const;
  static GlobalExplainerSet from_json(const nlohmann::json& j);

 private:
  std::map<TrainSlot, double> frequency_;
  std::set<TrainSlot> flagged_;
  double threshold_ = 0.3;
  std::size_t k_ = 20;
};

inline constexpr std::size_t kGlobalExplainerTopK = 20;
inline constexpr double kGlobalExplainerThreshold = 0.3;

GlobalExplainerSet find_global_explainers(const std::vector<ExplanationVector>& explanations,
                                          std::size_t k = kGlobalExplainerTopK,
                                          double threshold = kGlobalExplainerThreshold);

// Serialization.
nlohmann::json to_json(const ExplanationVector& e);
ExplanationVector explanation_from_json(const nlohmann::json& j);
void write_explanations_csv(const std::filesystem::path& path, const std::vector<ExplanationVector>& explanations,
                            const GlobalExplainerSet& globals);
/// Writes `<stem>.f32` (row-major, NaN for null) and `<stem>.json` (shape descriptor).
void write_matrix(const std::filesystem::path& stem, const TrainInfluenceMatrix& m);
TrainInfluenceMatrix read_matrix(const std::filesystem::path& stem);

}  // namespace tracseg::influence
