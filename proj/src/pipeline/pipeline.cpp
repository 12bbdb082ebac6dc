#include "tracseg/pipeline/pipeline.hpp"

#include <map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "tracseg/artifacts/bundle.hpp"
#include "tracseg/common/errors.hpp"
#include "tracseg/common/raw_io.hpp"
#include "tracseg/influence/gradient_cache.hpp"
#include "tracseg/segnet/dice.hpp"

namespace tracseg::pipeline {

namespace fs = std::filesystem;
using artifacts::BundleLayout;

void RunConfig::apply_seed() {
  synth.seed = seed;
  model.seed = seed;
  schedule.seed = seed;
  ingest.seed = seed;
}

namespace {

std::vector<std::string> ids_of(const data::Dataset& ds) {
  std::vector<std::string> ids;
  for (const auto& s : ds.items) ids.push_back(s.image.id);
  return ids;
}

// Removes outputs that depend on the stage being rerun.
void clear_downstream(const BundleLayout& layout, std::initializer_list<fs::path> dirs) {
  for (const auto& d : dirs)
    if (fs::exists(d)) fs::remove_all(d);
  fs::remove_all(layout.reports());
}

void write_dataset(const RunConfig& config, const data::DatasetSplits& splits) {
  const BundleLayout layout{config.out};
  artifacts::ensure_writable(config.out);
  clear_downstream(layout, {layout.dataset(), layout.checkpoints(), layout.explanations(), layout.train_influence(),
                            layout.features()});
  data::save_dataset(splits, layout.dataset());
  spdlog::info("dataset written to {} (train {}, val {}, test {})", layout.dataset().string(), splits.train.n(),
               splits.val.n(), splits.test.n());
}

segnet::UNet final_model(const segnet::CheckpointSet& set) { return set.final().materialize(set.model); }

std::vector<influence::ExplanationVector> read_explanations(const BundleLayout& layout) {
  const auto path = layout.explanations() / "explanations.json";
  if (!fs::exists(path)) throw PrerequisiteError("no explanations at " + path.string(), "influence");
  const auto j = io::read_json(path);
  std::vector<influence::ExplanationVector> out;
  for (const auto& e : j.at("explanations")) out.push_back(influence::explanation_from_json(e));
  return out;
}

}  // namespace

void run_synth(const RunConfig& config) { write_dataset(config, data::generate_synthetic(config.synth)); }

void run_ingest(const RunConfig& config, const fs::path& brats_root) {
  write_dataset(config, data::ingest_brats_layout(brats_root, config.ingest));
}

void run_train(const RunConfig& config) {
  const BundleLayout layout{config.out};
  artifacts::ensure_writable(config.out);
  if (!config.data.empty() && fs::weakly_canonical(config.data) != fs::weakly_canonical(layout.dataset()))
    write_dataset(config, data::load_dataset(config.data));
  const auto splits = data::load_dataset(layout.dataset());
  clear_downstream(layout, {layout.checkpoints(), layout.explanations(), layout.train_influence(), layout.features()});

  segnet::UNetConfig model_config = config.model;
  model_config.in_channels = splits.channels();
  model_config.n_classes = static_cast<int>(splits.class_names.size());
  segnet::UNet model(model_config);
  spdlog::info("training UNet ({} parameters) on {} slices", model.parameter_count(), splits.train.n());
  const auto set = segnet::train(model, splits.train, &splits.val, config.schedule);
  segnet::save_checkpoints(set, layout.checkpoints());
  io::write_json(layout.checkpoints() / "schedule.json", config.schedule.to_json());
}

void run_eval(const RunConfig& config) {
  const BundleLayout layout{config.out};
  artifacts::ensure_writable(config.out);
  const auto splits = data::load_dataset(layout.dataset());
  const auto set = segnet::load_checkpoints(layout.checkpoints());
  const auto model = final_model(set);
  nlohmann::json eval = {{"epoch", set.final().epoch}, {"class_names", splits.class_names}};
  fs::remove_all(layout.predictions());
  fs::create_directories(layout.predictions());
  for (auto split : {data::Split::train, data::Split::val, data::Split::test}) {
    const auto& ds = splits.get(split);
    std::vector<std::vector<std::uint8_t>> predicted;
    for (const auto& s : ds.items) {
      predicted.push_back(segnet::argmax_labels(model.predict(segnet::to_tensor(s.image))));
      io::write_u8(layout.predictions() / (s.image.id + ".msk"), predicted.back());
    }
    eval[std::string(data::to_string(split))] =
        segnet::evaluate_predictions(predicted, ds, model.config().n_classes).to_json();
  }
  io::write_json(layout.eval(), eval);
  const auto& val = eval.at("val").at("per_class");
  std::string text;
  for (std::size_t c = 0; c < val.size(); ++c)
    text += fmt::format(" {}={:.3f}", splits.class_names[c + 1], val[c].get<double>());
  spdlog::info("validation hard Dice:{}", text);
}

void run_influence(const RunConfig& config) {
  const BundleLayout layout{config.out};
  artifacts::ensure_writable(config.out);
  const auto splits = data::load_dataset(layout.dataset());
  auto set = segnet::load_checkpoints(layout.checkpoints());
  if (!config.schedule.checkpoint_epochs.empty()) set.selection = config.schedule.checkpoint_epochs;
  set.validate_selection();
  if (!fs::exists(layout.eval())) throw PrerequisiteError("no evaluation in " + layout.root.string(), "eval");
  clear_downstream(layout, {layout.explanations(), layout.train_influence(), layout.features()});

  influence::GradientCacheOptions options;
  options.threshold = config.threshold;
  options.scope = config.grad_scope;
  options.workers = config.workers;
  const auto cache = influence::GradientCache::build(layout.gradients(), set, {&splits.train, &splits.test}, options);

  const auto train_ids = ids_of(splits.train);
  const auto test_ids = ids_of(splits.test);
  const auto explanations = influence::explanation_vectors(cache, test_ids, train_ids);
  const auto globals = influence::find_global_explainers(explanations, config.global_k, config.global_freq);
  spdlog::info("{} explanation vectors, {} global explainers flagged", explanations.size(), globals.flagged().size());

  fs::create_directories(layout.explanations());
  nlohmann::json all = nlohmann::json::array();
  for (const auto& e : explanations) all.push_back(influence::to_json(e));
  io::write_json(layout.explanations() / "explanations.json", {{"epochs", cache.epochs()},
                                                               {"learning_rates", cache.learning_rates()},
                                                               {"threshold", cache.threshold()},
                                                               {"grad_scope", influence::to_string(cache.scope())},
                                                               {"n_train", train_ids.size()},
                                                               {"n_classes", cache.n_classes()},
                                                               {"explanations", all}});
  influence::write_explanations_csv(layout.explanations() / "explanations.csv", explanations, globals);
  io::write_json(layout.explanations() / "global_explainers.json", globals.to_json());

  // Unsplit score of each (test image, train image): the sum over every class pair.
  std::map<std::pair<std::string, std::string>, double> baseline;
  for (const auto& e : explanations)
    for (const auto& s : e.scores) baseline[{s.test_image_id, s.train_image_id}] += s.value.value_or(0.0);
  std::string csv = "test_id,train_id,score\n";
  for (const auto& test : test_ids)
    for (const auto& train : train_ids) csv += fmt::format("{},{},{}\n", test, train, baseline.at({test, train}));
  io::write_text(layout.explanations() / "baseline.csv", csv);
}

void run_self_influence(const RunConfig& config) {
  const BundleLayout layout{config.out};
  artifacts::ensure_writable(config.out);
  const auto splits = data::load_dataset(layout.dataset());
  const auto cache = influence::GradientCache::open(layout.gradients());
  const auto train_ids = ids_of(splits.train);
  for (const auto& id : train_ids)
    if (!cache.contains(id)) throw PrerequisiteError("gradient cache does not cover train image " + id, "influence");
  clear_downstream(layout, {layout.train_influence(), layout.features()});
  fs::create_directories(layout.train_influence());

  const auto matrices = influence::train_influence_matrices(cache, train_ids);
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& m : matrices) {
    influence::write_matrix(layout.train_influence() / fmt::format("matrix_{}", m.cls), m);
    nlohmann::json blocks = nlohmann::json::array();
    for (int j = 1; j <= m.n_classes; ++j) {
      const auto mean = m.block_mean(j);
      blocks.push_back(mean ? nlohmann::json(*mean) : nlohmann::json(nullptr));
    }
    summary.push_back({{"class", m.cls}, {"rows", m.rows}, {"cols", m.cols}, {"block_means", blocks}});
  }
  io::write_json(layout.train_influence() / "summary.json", {{"matrices", summary}});

  const auto self = influence::self_influences(cache, train_ids);
  std::string csv = "image_id";
  for (int c = 1; c <= cache.n_classes(); ++c) csv += fmt::format(",class_{}", c);
  csv += ",total\n";
  auto cell = [](const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); };
  for (const auto& s : self) {
    csv += s.image_id;
    for (const auto& v : s.per_class) csv += "," + cell(v);
    csv += "," + cell(s.total) + "\n";
  }
  io::write_text(layout.train_influence() / "self_influence.csv", csv);
  spdlog::info("wrote {} train-influence matrices and self-influence for {} slices", matrices.size(), self.size());
}

void run_faithfulness(const RunConfig& config) {
  const BundleLayout layout{config.out};
  artifacts::ensure_writable(config.out);
  const auto splits = data::load_dataset(layout.dataset());
  const auto set = segnet::load_checkpoints(layout.checkpoints());
  const auto explanations = read_explanations(layout);
  const auto globals =
      influence::GlobalExplainerSet::from_json(io::read_json(layout.explanations() / "global_explainers.json"));
  if (!fs::exists(layout.train_influence() / "summary.json"))
    throw PrerequisiteError("no train-influence matrices in " + layout.root.string(), "self-influence");
  clear_downstream(layout, {layout.features()});

  const auto model = final_model(set);
  const faithfulness::ActivationTable activations(model, {&splits.train, &splits.test}, config.threshold);
  const auto impacts = faithfulness::feature_impacts(model, splits.val);
  nlohmann::json summary = nlohmann::json::array();
  for (int c = 1; c <= splits.n_foreground_classes(); ++c) {
    std::vector<faithfulness::FeatureImportanceCurve> curves;
    for (int k = 0; k < model.hidden_features(); ++k)
      curves.push_back(faithfulness::feature_importance_curve(k, c, explanations, activations, &globals,
                                                               config.curve_rules));
    auto report = faithfulness::select_predictive_features(c, std::move(curves), impacts[c - 1]);
    faithfulness::write_feature_report(layout.features(), report, config.curve_rules);
    std::map<std::string, int> shapes;
    for (const auto& curve : report.curves)
      if (curve.points.size() >= config.curve_rules.min_points)
        ++shapes[std::string(faithfulness::to_string(curve.classification.shape))];
    summary.push_back({{"class", c},
                       {"predictive", report.predictive},
                       {"shapes", shapes},
                       {"mann_whitney_p", report.mann_whitney_p ? nlohmann::json(*report.mann_whitney_p)
                                                                : nlohmann::json(nullptr)}});
    spdlog::info("class {}: {} predictive features", c, report.predictive.size());
  }
  io::write_json(layout.features() / "summary.json", {{"features", model.hidden_features()}, {"classes", summary}});
  if (config.seal) artifacts::seal_bundle(config.out);
}

void run_all(const RunConfig& config) {
  const BundleLayout layout{config.out};
  if (config.data.empty() && !fs::exists(layout.dataset() / "manifest.json")) run_synth(config);
  run_train(config);
  run_eval(config);
  run_influence(config);
  run_self_influence(config);
  run_faithfulness(config);
  run_report(config);  // reports/ sits outside the sealed content
}

}  // namespace tracseg::pipeline
