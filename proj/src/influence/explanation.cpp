#include "tracseg/influence/explanation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "tracseg/common/errors.hpp"
#include "tracseg/common/raw_io.hpp"

namespace tracseg::influence {

std::vector<std::size_t> rank_scores(const std::vector<InfluenceScore>& scores) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i].value) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& sa = scores[a];
    const auto& sb = scores[b];
    if (*sa.value != *sb.value) return *sa.value > *sb.value;
    if (sa.train_image_id != sb.train_image_id) return sa.train_image_id < sb.train_image_id;
    return sa.train_class < sb.train_class;
  });
  return order;
}

std::vector<std::size_t> ExplanationVector::filtered_ranking(const GlobalExplainerSet* hide) const {
  if (!hide) return ranking;
  std::vector<std::size_t> out;
  for (std::size_t idx : ranking)
    if (!hide->contains(scores[idx].train_image_id, scores[idx].train_class)) out.push_back(idx);
  return out;
}

std::vector<const InfluenceScore*> ExplanationVector::proponents(std::size_t k, const GlobalExplainerSet* hide) const {
  const auto order = filtered_ranking(hide);
  std::vector<const InfluenceScore*> out;
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) out.push_back(&scores[order[i]]);
  return out;
}

std::vector<const InfluenceScore*> ExplanationVector::opponents(std::size_t k, const GlobalExplainerSet* hide) const {
  const auto order = filtered_ranking(hide);
  std::vector<const InfluenceScore*> out;
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) out.push_back(&scores[order[order.size() - 1 - i]]);
  return out;
}

std::vector<ExplanationVector> explanation_vectors(const GradientCache& cache, const std::vector<std::string>& test_ids,
                                                   const std::vector<std::string>& train_ids) {
  const auto test_keys = region_keys(test_ids, cache.n_classes());
  const auto train_keys = region_keys(train_ids, cache.n_classes());
  const ScoreBlock block = score_block(cache, test_keys, train_keys);
  std::vector<ExplanationVector> out;
  out.reserve(test_keys.size());
  for (std::size_t r = 0; r < test_keys.size(); ++r) {
    ExplanationVector e;
    e.test_image_id = test_keys[r].image_id;
    e.test_class = test_keys[r].cls;
    e.scores.reserve(train_keys.size());
    for (std::size_t c = 0; c < train_keys.size(); ++c) {
      InfluenceScore s;
      s.test_image_id = e.test_image_id;
      s.test_class = e.test_class;
      s.train_image_id = train_keys[c].image_id;
      s.train_class = train_keys[c].cls;
      s.value = block.value(r, c);
      s.per_checkpoint_terms = block.terms(r, c);
      e.scores.push_back(std::move(s));
    }
    e.ranking = rank_scores(e.scores);
    out.push_back(std::move(e));
  }
  return out;
}

ExplanationVector explanation_vector_from_scratch(const segnet::CheckpointSet& checkpoints,
                                                  const data::Dataset& train_set, const data::Sample& test,
                                                  int test_class, const RegionGradientOptions& options) {
  const auto selected = checkpoints.selected();
  if (selected.empty()) throw ContractError("checkpoint set is empty");
  const int n_classes = checkpoints.model.n_classes - 1;
  if (test_class < 1 || test_class > n_classes) throw ContractError("test class out of range");
  std::vector<double> rates;
  // [train image][class] -> per-checkpoint gradient storage
  std::vector<std::vector<std::vector<std::optional<std::vector<float>>>>> train_grads(
      train_set.n(), std::vector<std::vector<std::optional<std::vector<float>>>>(n_classes));
  std::vector<std::optional<std::vector<float>>> test_grads;
  for (const auto* ckpt : selected) {
    rates.push_back(ckpt->learning_rate);
    const segnet::UNet model = ckpt->materialize(checkpoints.model);
    test_grads.push_back(region_gradient(model, ckpt->epoch, test, test_class, options).grad);
    for (std::size_t n = 0; n < train_set.n(); ++n) {
      auto all = region_gradients(model, ckpt->epoch, train_set.items[n], options);
      for (int c = 0; c < n_classes; ++c) train_grads[n][c].push_back(std::move(all[c].grad));
    }
  }
  auto views = [](const std::vector<std::optional<std::vector<float>>>& grads) {
    std::vector<GradientView> out;
    for (const auto& g : grads) out.push_back(g ? GradientView(std::span<const float>(*g)) : std::nullopt);
    return out;
  };
  const auto test_views = views(test_grads);
  ExplanationVector e;
  e.test_image_id = test.image.id;
  e.test_class = test_class;
  for (std::size_t n = 0; n < train_set.n(); ++n) {
    for (int c = 0; c < n_classes; ++c) {
      const auto train_views = views(train_grads[n][c]);
      auto st = tracin_extended(train_views, test_views, rates);
      InfluenceScore s;
      s.test_image_id = e.test_image_id;
      s.test_class = test_class;
      s.train_image_id = train_set.items[n].image.id;
      s.train_class = c + 1;
      s.value = st.value;
      s.per_checkpoint_terms = std::move(st.terms);
      e.scores.push_back(std::move(s));
    }
  }
  e.ranking = rank_scores(e.scores);
  return e;
}

std::size_t TrainInfluenceMatrix::column(int train_class, std::size_t train_row) const {
  if (train_class < 1 || train_class > n_classes || train_row >= image_ids.size())
    throw ContractError("matrix column out of range");
  return static_cast<std::size_t>(train_class - 1) * image_ids.size() + train_row;
}

std::optional<double> TrainInfluenceMatrix::at(std::size_t row, int train_class, std::size_t train_row) const {
  if (row >= rows) throw ContractError("matrix row out of range");
  const std::size_t idx = row * cols + column(train_class, train_row);
  if (null_mask[idx]) return std::nullopt;
  return values[idx];
}

std::optional<double> TrainInfluenceMatrix::block_mean(int train_class) const {
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t n = 0; n < image_ids.size(); ++n)
      if (auto v = at(r, train_class, n)) {
        sum += *v;
        ++count;
      }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

std::vector<TrainInfluenceMatrix> train_influence_matrices(const GradientCache& cache,
                                                           const std::vector<std::string>& train_ids) {
  const int n_classes = cache.n_classes();
  const auto keys = region_keys(train_ids, n_classes);
  const ScoreBlock block = score_block(cache, keys, keys);
  const std::size_t n = train_ids.size();
  std::vector<TrainInfluenceMatrix> out;
  for (int i = 1; i <= n_classes; ++i) {
    TrainInfluenceMatrix m;
    m.cls = i;
    m.image_ids = train_ids;
    m.n_classes = n_classes;
    m.rows = n;
    m.cols = n * static_cast<std::size_t>(n_classes);
    m.values.assign(m.rows * m.cols, std::numeric_limits<double>::quiet_NaN());
    m.null_mask.assign(m.rows * m.cols, 1);
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t key_row = r * n_classes + (i - 1);
      for (int j = 1; j <= n_classes; ++j) {
        for (std::size_t c = 0; c < n; ++c) {
          const std::size_t key_col = c * n_classes + (j - 1);
          if (auto v = block.value(key_row, key_col)) {
            const std::size_t idx = r * m.cols + m.column(j, c);
            m.values[idx] = *v;
            m.null_mask[idx] = 0;
          }
        }
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<SelfInfluence> self_influences(const GradientCache& cache, const std::vector<std::string>& image_ids) {
  std::vector<SelfInfluence> out;
  for (const auto& id : image_ids) {
    SelfInfluence s;
    s.image_id = id;
    for (int c = 1; c <= cache.n_classes(); ++c) {
      const auto stream = cache.stream(id, c);
      const auto st = tracin_extended(stream, stream, cache.learning_rates());
      s.per_class.push_back(st.value);
      if (st.value) s.total = s.total.value_or(0.0) + *st.value;
    }
    out.push_back(std::move(s));
  }
  return out;
}

GlobalExplainerSet::GlobalExplainerSet(std::map<TrainSlot, double> frequency, double threshold, std::size_t k)
    : frequency_(std::move(frequency)), threshold_(threshold), k_(k) {
  for (const auto& [slot, f] : frequency_)
    if (f >= threshold_) flagged_.insert(slot);
}

bool GlobalExplainerSet::contains(const std::string& train_image_id, int train_class) const {
  return flagged_.count(TrainSlot{train_image_id, train_class}) > 0;
}

nlohmann::json GlobalExplainerSet::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [slot, f] : frequency_)
    entries.push_back({{"train_id", slot.train_image_id},
                       {"train_class", slot.train_class},
                       {"frequency", f},
                       {"flagged", flagged_.count(slot) > 0}});
  return {{"k", k_}, {"threshold", threshold_}, {"n_flagged", flagged_.size()}, {"entries", entries}};
}

GlobalExplainerSet GlobalExplainerSet::from_json(const nlohmann::json& j) {
  std::map<TrainSlot, double> freq;
  for (const auto& e : j.at("entries"))
    freq[TrainSlot{e.at("train_id").get<std::string>(), e.at("train_class").get<int>()}] = e.at("frequency");
  return GlobalExplainerSet(std::move(freq), j.at("threshold"), j.at("k"));
}

GlobalExplainerSet find_global_explainers(const std::vector<ExplanationVector>& explanations, std::size_t k,
                                          double threshold) {
  if (k == 0) throw ConfigError("global explainer k must be positive");
  if (threshold < 0 || threshold > 1) throw ConfigError("global explainer threshold must be in [0, 1]");
  std::map<TrainSlot, double> counts;
  std::size_t regions = 0;
  bool clamped = false;
  for (const auto& e : explanations) {
    if (e.ranking.empty()) continue;
    ++regions;
    const std::size_t k_eff = std::min(k, e.ranking.size());
    clamped |= k_eff < k;
    std::set<TrainSlot> hit;
    for (std::size_t r = 0; r < k_eff; ++r) {
      for (std::size_t idx : {e.ranking[r], e.ranking[e.ranking.size() - 1 - r]}) {
        const auto& s = e.scores[idx];
        hit.insert({s.train_image_id, s.train_class});
      }
    }
    for (const auto& slot : hit) counts[slot] += 1.0;
  }
  if (regions == 0) {
    spdlog::warn("global explainers: no test region was predicted; nothing flagged");
    return GlobalExplainerSet({}, threshold, k);
  }
  if (clamped) spdlog::warn("global explainers: k = {} exceeds the number of ranked entries; clamped", k);
  for (auto& [slot, c] : counts) c /= static_cast<double>(regions);
  return GlobalExplainerSet(std::move(counts), threshold, k);
}

nlohmann::json to_json(const ExplanationVector& e) {
  nlohmann::json scores = nlohmann::json::array();
  for (const auto& s : e.scores) {
    scores.push_back({{"train_id", s.train_image_id},
                      {"train_class", s.train_class},
                      {"score", s.value ? nlohmann::json(*s.value) : nlohmann::json(nullptr)},
                      {"terms", s.per_checkpoint_terms}});
  }
  return {{"test_id", e.test_image_id},
          {"test_class", e.test_class},
          {"dimension", e.dimension()},
          {"scores", scores},
          {"ranking", e.ranking}};
}

ExplanationVector explanation_from_json(const nlohmann::json& j) {
  ExplanationVector e;
  e.test_image_id = j.at("test_id");
  e.test_class = j.at("test_class");
  for (const auto& s : j.at("scores")) {
    InfluenceScore score;
    score.test_image_id = e.test_image_id;
    score.test_class = e.test_class;
    score.train_image_id = s.at("train_id");
    score.train_class = s.at("train_class");
    if (!s.at("score").is_null()) score.value = s.at("score").get<double>();
    score.per_checkpoint_terms = s.at("terms").get<std::vector<double>>();
    e.scores.push_back(std::move(score));
  }
  e.ranking = j.at("ranking").get<std::vector<std::size_t>>();
  if (e.ranking != rank_scores(e.scores)) throw CorruptFileError("explanation ranking does not match its scores");
  return e;
}

void write_explanations_csv(const std::filesystem::path& path, const std::vector<ExplanationVector>& explanations,
                            const GlobalExplainerSet& globals) {
  // Rows of each test region follow its ranking; null slots come last without a rank.
  std::string text = "test_id,test_class,rank,train_id,train_class,score,is_null,is_global_explainer\n";
  auto row = [&](const InfluenceScore& s, std::string rank) {
    text += fmt::format("{},{},{},{},{},{},{},{}\n", s.test_image_id, s.test_class, rank, s.train_image_id,
                        s.train_class, s.value ? fmt::format("{}", *s.value) : std::string(), s.value ? 0 : 1,
                        globals.contains(s.train_image_id, s.train_class) ? 1 : 0);
  };
  for (const auto& e : explanations) {
    for (std::size_t r = 0; r < e.ranking.size(); ++r) row(e.scores[e.ranking[r]], std::to_string(r + 1));
    for (const auto& s : e.scores)
      if (s.is_null()) row(s, {});
  }
  io::write_text(path, text);
}

void write_matrix(const std::filesystem::path& stem, const TrainInfluenceMatrix& m) {
  std::vector<float> data(m.values.begin(), m.values.end());
  io::write_f32(std::filesystem::path(stem).concat(".f32"), data);
  io::write_json(std::filesystem::path(stem).concat(".json"), {{"class", m.cls},
                                                               {"rows", m.rows},
                                                               {"cols", m.cols},
                                                               {"n_classes", m.n_classes},
                                                               {"dtype", "float32"},
                                                               {"order", "row-major"},
                                                               {"null", "NaN"},
                                                               {"row_ids", m.image_ids},
                                                               {"column_blocks", "train class j = 1..n_classes, each over row_ids"}});
}

TrainInfluenceMatrix read_matrix(const std::filesystem::path& stem) {
  const auto desc = io::read_json(std::filesystem::path(stem).concat(".json"));
  TrainInfluenceMatrix m;
  m.cls = desc.at("class");
  m.rows = desc.at("rows");
  m.cols = desc.at("cols");
  m.n_classes = desc.at("n_classes");
  m.image_ids = desc.at("row_ids").get<std::vector<std::string>>();
  if (m.rows != m.image_ids.size() || m.cols != m.rows * static_cast<std::size_t>(m.n_classes))
    throw CorruptFileError("matrix descriptor " + stem.string() + " has inconsistent dimensions");
  const auto data = io::read_f32(std::filesystem::path(stem).concat(".f32"), m.rows * m.cols);
  m.values.assign(data.begin(), data.end());
  m.null_mask.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) m.null_mask[i] = std::isnan(data[i]) ? 1 : 0;
  return m;
}

}  // namespace tracseg::influence
