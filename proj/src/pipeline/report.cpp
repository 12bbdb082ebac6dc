#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "tracseg/artifacts/bundle.hpp"
#include "tracseg/common/errors.hpp"
#include "tracseg/common/raw_io.hpp"
#include "tracseg/pipeline/pipeline.hpp"
#include "tracseg/render/png.hpp"
#include "tracseg/render/svg.hpp"

namespace tracseg::pipeline {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kClassColors{"#999999", "#e63946", "#457b9d", "#f4a261", "#2a9d8f", "#8338ec"};

std::string class_color(int c) { return kClassColors[static_cast<std::size_t>(c) % kClassColors.size()]; }

// Heatmap of one train-influence matrix, `scale` pixels per cell, with block separators.
std::string matrix_png(const influence::TrainInfluenceMatrix& m, int scale) {
  std::vector<double> finite;
  for (std::size_t i = 0; i < m.values.size(); ++i)
    if (!m.null_mask[i]) finite.push_back(std::abs(m.values[i]));
  // Robust color range: the 99th percentile of |score| so a few self-influences do not wash out the blocks.
  double max_abs = 0;
  if (!finite.empty()) {
    std::sort(finite.begin(), finite.end());
    max_abs = finite[std::min(finite.size() - 1, static_cast<std::size_t>(0.99 * finite.size()))];
  }
  const int w = static_cast<int>(m.cols) * scale, h = static_cast<int>(m.rows) * scale;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y / scale) * m.cols + static_cast<std::size_t>(x / scale);
      render::Rgb c = render::diverging(m.null_mask[idx] ? std::nan("") : m.values[idx], max_abs);
      if (x > 0 && (x / scale) % m.rows == 0 && x % scale == 0) c = {0, 0, 0};
      std::copy(c.begin(), c.end(), rgb.begin() + (static_cast<std::size_t>(y) * w + x) * 3);
    }
  }
  return render::encode_png_rgb(w, h, rgb);
}

}  // namespace

void run_report(const RunConfig& config) {
  const artifacts::BundleLayout layout{config.out};
  const auto splits = data::load_dataset(layout.dataset());
  if (!fs::exists(layout.explanations() / "explanations.json"))
    throw PrerequisiteError("no explanations in " + layout.root.string(), "influence");
  if (!fs::exists(layout.train_influence() / "summary.json"))
    throw PrerequisiteError("no train-influence matrices in " + layout.root.string(), "self-influence");
  if (!fs::exists(layout.features() / "summary.json"))
    throw PrerequisiteError("no feature analysis in " + layout.root.string(), "faithfulness");
  if (config.top < 1) throw ConfigError("--top must be positive");
  const fs::path out = layout.reports();
  fs::create_directories(out);
  const int n_classes = splits.n_foreground_classes();
  const auto& names = splits.class_names;
  nlohmann::json summary;

  // Train-influence matrices.
  nlohmann::json block_table = nlohmann::json::array();
  std::string block_csv = "test_class,train_class,block_mean\n";
  for (int c = 1; c <= n_classes; ++c) {
    const auto m = influence::read_matrix(layout.train_influence() / fmt::format("matrix_{}", c));
    const int scale = m.rows < 64 ? 4 : (m.rows < 160 ? 2 : 1);
    io::write_text(out / fmt::format("matrix_{}.png", c), matrix_png(m, scale));
    for (int j = 1; j <= n_classes; ++j) {
      const auto mean = m.block_mean(j);
      block_csv += fmt::format("{},{},{}\n", c, j, mean ? fmt::format("{}", *mean) : std::string());
    }
  }
  io::write_text(out / "matrix_block_means.csv", block_csv);

  // Class distribution of the top proponents of each test region, global explainers removed.
  const auto explanations_json = io::read_json(layout.explanations() / "explanations.json");
  std::vector<influence::ExplanationVector> explanations;
  for (const auto& e : explanations_json.at("explanations")) explanations.push_back(influence::explanation_from_json(e));
  const auto globals =
      influence::GlobalExplainerSet::from_json(io::read_json(layout.explanations() / "global_explainers.json"));
  std::vector<std::vector<double>> counts(n_classes + 1, std::vector<double>(n_classes + 1, 0.0));
  std::vector<int> regions(n_classes + 1, 0);
  for (const auto& e : explanations) {
    const auto top = e.proponents(static_cast<std::size_t>(config.top), &globals);
    if (top.empty()) continue;
    ++regions[e.test_class];
    for (const auto* s : top) counts[e.test_class][s->train_class] += 1.0;
  }
  std::string prop_csv = "test_class,train_class,count,fraction\n";
  std::vector<std::pair<std::string, std::vector<render::Bar>>> groups;
  nlohmann::json same_class = nlohmann::json::object();
  for (int i = 1; i <= n_classes; ++i) {
    double total = 0;
    for (int j = 1; j <= n_classes; ++j) total += counts[i][j];
    std::vector<render::Bar> bars;
    for (int j = 1; j <= n_classes; ++j) {
      const double frac = total > 0 ? counts[i][j] / total : 0.0;
      prop_csv += fmt::format("{},{},{},{}\n", i, j, counts[i][j], frac);
      bars.push_back({names[j], frac, class_color(j)});
    }
    same_class[names[i]] = total > 0 ? counts[i][i] / total : 0.0;
    groups.emplace_back("test " + names[i], std::move(bars));
  }
  io::write_text(out / fmt::format("top{}_proponent_classes.csv", config.top), prop_csv);
  io::write_text(out / fmt::format("top{}_proponent_classes.svg", config.top),
                 render::svg_bar_chart(fmt::format("Class of the top {} proponents", config.top),
                                       "fraction of proponents", groups));
  summary["same_class_proponent_fraction"] = same_class;

  // Feature-importance curves and impact histograms.
  for (int c = 1; c <= n_classes; ++c) {
    const auto curves = io::read_json(layout.features() / std::to_string(c) / "curves.json");
    std::vector<render::Series> series;
    std::string csv = "k,position,fi,shape,predictive\n";
    for (const auto& curve : curves.at("curves")) {
      const int k = curve.at("feature");
      const bool predictive = curve.at("predictive");
      const std::string shape = curve.at("shape").is_null() ? "too_short" : curve.at("shape").get<std::string>();
      render::Series s;
      s.label = fmt::format("k={} {}", k, shape);
      s.x = curve.at("positions").get<std::vector<double>>();
      s.y = curve.at("points").get<std::vector<double>>();
      s.color = predictive ? "#e63946" : "#bbbbbb";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        csv += fmt::format("{},{},{},{},{}\n", k, s.x[i], s.y[i], shape, predictive ? 1 : 0);
      series.push_back(std::move(s));
    }
    io::write_text(out / fmt::format("fi_curves_{}.csv", c), csv);
    io::write_text(out / fmt::format("fi_curves_{}.svg", c),
                   render::svg_line_chart(fmt::format("Feature importance, class {}", names[c]),
                                          "TracIn rank (proponents to opponents)", "FI", series, true));

    const auto hist = io::read_json(layout.features() / std::to_string(c) / "histogram.json");
    io::write_json(out / fmt::format("impact_histogram_{}.json", c), hist);
    const auto edges = hist.at("edges").get<std::vector<double>>();
    std::vector<std::pair<std::string, std::vector<render::Bar>>> hist_groups;
    const auto pc = hist.at("predictive").at("counts").get<std::vector<int>>();
    const auto oc = hist.at("non_predictive").at("counts").get<std::vector<int>>();
    for (std::size_t b = 0; b < pc.size(); ++b)
      hist_groups.push_back({fmt::format("{:.2g}", edges[b]),
                             {{"predictive", static_cast<double>(pc[b]), "#e63946"},
                              {"non-predictive", static_cast<double>(oc[b]), "#457b9d"}}});
    io::write_text(out / fmt::format("impact_histogram_{}.svg", c),
                   render::svg_bar_chart(fmt::format("Feature impact F, class {}", names[c]), "features", hist_groups));
  }
  summary["features"] = io::read_json(layout.features() / "summary.json");

  // Self-influence, sorted.
  std::istringstream lines(io::read_text(layout.train_influence() / "self_influence.csv"));
  std::string line;
  std::getline(lines, line);
  std::vector<std::pair<double, std::string>> self;
  while (std::getline(lines, line)) {
    const auto last = line.rfind(',');
    if (last == std::string::npos || last + 1 == line.size()) continue;
    self.emplace_back(std::stod(line.substr(last + 1)), line.substr(0, line.find(',')));
  }
  std::sort(self.begin(), self.end(), std::greater<>());
  std::string self_csv = "rank,image_id,self_influence\n";
  render::Series s{"train slices", {}, {}, "#1d3557"};
  for (std::size_t r = 0; r < self.size(); ++r) {
    self_csv += fmt::format("{},{},{}\n", r + 1, self[r].second, self[r].first);
    s.x.push_back(static_cast<double>(r + 1));
    s.y.push_back(self[r].first);
  }
  io::write_text(out / "self_influence_ranked.csv", self_csv);
  io::write_text(out / "self_influence_ranked.svg",
                 render::svg_line_chart("Self-influence of train slices", "rank", "self-influence", {s}));

  if (fs::exists(layout.eval())) summary["eval"] = io::read_json(layout.eval());
  io::write_json(out / "summary.json", summary);
  spdlog::info("report written to {}", out.string());
}

}  // namespace tracseg::pipeline
