#include "tracseg/artifacts/bundle.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <memory>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "tracseg/common/errors.hpp"
#include "tracseg/common/raw_io.hpp"
#include "tracseg/version.hpp"

namespace tracseg::artifacts {

namespace fs = std::filesystem;

const std::vector<std::string>& bundle_kinds() {
  static const std::vector<std::string> kinds{"dataset",      "checkpoints",     "gradients",
                                              "explanations", "train_influence", "features"};
  return kinds;
}

namespace {

struct DigestDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1)
      throw std::runtime_error("cannot initialise SHA-256");
  }
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), md, &len);
    std::string out;
    for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, DigestDeleter> ctx_;
};

// Directory and exclusions that make up each kind.
struct KindSpec {
  fs::path dir;
  std::vector<fs::path> exclude;
};

KindSpec kind_spec(const BundleLayout& layout, const std::string& kind) {
  if (kind == "dataset") return {layout.dataset(), {}};
  if (kind == "checkpoints") return {layout.checkpoints(), {layout.gradients()}};
  if (kind == "gradients") return {layout.gradients(), {}};
  if (kind == "explanations") return {layout.explanations(), {}};
  if (kind == "train_influence") return {layout.train_influence(), {}};
  if (kind == "features") return {layout.features(), {}};
  throw ContractError("unknown bundle kind '" + kind + "'");
}

// Command that produces each kind, for prerequisite messages.
std::string producing_command(const std::string& kind) {
  if (kind == "dataset") return "synth";
  if (kind == "checkpoints") return "train";
  if (kind == "gradients" || kind == "explanations") return "influence";
  if (kind == "train_influence") return "self-influence";
  return "faithfulness";
}

std::string combined_sha(const std::map<std::string, std::string>& files) {
  std::string text;
  for (const auto& [path, sha] : files) text += path + " " + sha + "\n";
  return sha256_hex(text);
}

std::string now_utc() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now())));
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot read " + path.string());
  Sha256 h;
  std::vector<char> buffer(1 << 20);
  while (in) {
    in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    if (in.gcount() > 0) h.update(buffer.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

KindIndex index_kind(const BundleLayout& layout, const std::string& kind) {
  const KindSpec spec = kind_spec(layout, kind);
  KindIndex index;
  if (fs::is_directory(spec.dir)) {
    for (auto it = fs::recursive_directory_iterator(spec.dir); it != fs::recursive_directory_iterator(); ++it) {
      if (std::find(spec.exclude.begin(), spec.exclude.end(), it->path()) != spec.exclude.end()) {
        it.disable_recursion_pending();
        continue;
      }
      if (!it->is_regular_file()) continue;
      index.files[fs::relative(it->path(), layout.root).generic_string()] = sha256_file(it->path());
    }
  }
  if (index.files.empty())
    throw PrerequisiteError("bundle kind '" + kind + "' is missing", producing_command(kind));
  index.sha = combined_sha(index.files);
  return index;
}

bool is_sealed(const fs::path& root) { return fs::exists(BundleLayout{root}.manifest()); }

void ensure_writable(const fs::path& root) {
  if (is_sealed(root))
    throw ConfigError("bundle at " + root.string() + " is sealed; write to a new --out directory instead");
}

nlohmann::json seal_bundle(const fs::path& root) {
  const BundleLayout layout{root};
  if (is_sealed(root)) return Bundle::open(root).manifest();

  std::vector<std::string> missing;
  std::string first_command;
  nlohmann::json kinds = nlohmann::json::object();
  for (const auto& kind : bundle_kinds()) {
    try {
      const auto index = index_kind(layout, kind);
      kinds[kind] = {{"sha", index.sha}, {"files", index.files}};
    } catch (const PrerequisiteError& e) {
      missing.push_back(kind + " (run '" + e.required_command() + "')");
      if (first_command.empty()) first_command = e.required_command();
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw PrerequisiteError("cannot seal " + root.string() + ": missing " + list, first_command);
  }

  const auto run = io::read_json(layout.checkpoints() / "run.json");
  const auto grads = io::read_json(layout.gradients() / "index.json");
  nlohmann::json manifest = {{"format_version", kBundleFormatVersion},
                             {"tool_version", kToolVersion},
                             {"created", now_utc()},
                             {"dataset_sha", kinds["dataset"]["sha"]},
                             {"checkpoint_run", run.at("run_id")},
                             {"selected_epochs", run.at("selected_epochs")},
                             {"threshold", grads.at("threshold")},
                             {"grad_scope", grads.at("scope")},
                             {"kinds", kinds}};
  io::write_json(layout.manifest(), manifest);
  for (const auto& [kind, entry] : kinds.items())
    for (const auto& [path, sha] : entry.at("files").items())
      fs::permissions(root / path, fs::perms::owner_read | fs::perms::group_read | fs::perms::others_read);
  fs::permissions(layout.manifest(), fs::perms::owner_read | fs::perms::group_read | fs::perms::others_read);
  spdlog::info("sealed bundle {}", root.string());
  return manifest;
}

Bundle Bundle::open(const fs::path& root) {
  Bundle b;
  b.layout_ = BundleLayout{root};
  if (!fs::exists(b.layout_.manifest()))
    throw IntegrityError("bundle at " + root.string() + " is not sealed (no bundle.json)");
  b.manifest_ = io::read_json(b.layout_.manifest());
  const int format = b.manifest_.value("format_version", 0);
  if (format != kBundleFormatVersion)
    throw UnsupportedFormatError(fmt::format("bundle format version {} is not supported (expected {})", format,
                                             kBundleFormatVersion));
  const auto tool = b.manifest_.value("tool_version", std::string("unknown"));
  if (tool != kToolVersion)
    spdlog::warn("bundle was written by tool version {} (this is {}); format version matches", tool, kToolVersion);

  const auto& kinds = b.manifest_.at("kinds");
  for (const auto& kind : bundle_kinds()) {
    if (!kinds.contains(kind)) throw IntegrityError("bundle manifest has no entry for kind '" + kind + "'");
    const auto& expected = kinds.at(kind).at("files");
    for (const auto& [path, sha] : expected.items()) {
      if (!fs::exists(root / path)) throw IntegrityError("bundle file missing: " + path);
      if (sha256_file(root / path) != sha.get<std::string>()) throw IntegrityError("bundle file modified: " + path);
    }
    KindIndex actual;
    try {
      actual = index_kind(b.layout_, kind);
    } catch (const PrerequisiteError&) {
      throw IntegrityError("bundle kind '" + kind + "' has no files");
    }
    for (const auto& [path, sha] : actual.files)
      if (!expected.contains(path)) throw IntegrityError("unexpected file in sealed bundle: " + path);
  }
  b.etag_ = "\"" + sha256_file(b.layout_.manifest()) + "\"";
  return b;
}

data::DatasetSplits Bundle::dataset() const { return data::load_dataset(layout_.dataset()); }

segnet::CheckpointSet Bundle::checkpoints() const { return segnet::load_checkpoints(layout_.checkpoints()); }

std::vector<influence::ExplanationVector> Bundle::explanations() const {
  const auto j = io::read_json(layout_.explanations() / "explanations.json");
  std::vector<influence::ExplanationVector> out;
  for (const auto& e : j.at("explanations")) out.push_back(influence::explanation_from_json(e));
  return out;
}

influence::GlobalExplainerSet Bundle::global_explainers() const {
  return influence::GlobalExplainerSet::from_json(io::read_json(layout_.explanations() / "global_explainers.json"));
}

influence::TrainInfluenceMatrix Bundle::matrix(int cls) const {
  const auto stem = layout_.train_influence() / fmt::format("matrix_{}", cls);
  if (!fs::exists(fs::path(stem).concat(".json"))) throw ContractError(fmt::format("no matrix for class {}", cls));
  return influence::read_matrix(stem);
}

nlohmann::json Bundle::features(int cls) const {
  const auto dir = layout_.features() / std::to_string(cls);
  if (!fs::exists(dir / "curves.json")) throw ContractError(fmt::format("no feature report for class {}", cls));
  auto curves = io::read_json(dir / "curves.json");
  curves["histogram"] = io::read_json(dir / "histogram.json");
  nlohmann::json impacts = nlohmann::json::array();
  std::istringstream lines(io::read_text(dir / "impacts.csv"));
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    int k = 0, predictive = 0, slices = 0;
    double f = 0;
    if (std::sscanf(line.c_str(), "%d,%lf,%d,%d", &k, &f, &predictive, &slices) != 4)
      throw CorruptFileError("malformed impacts.csv line: " + line);
    impacts.push_back({{"feature", k}, {"F", f}, {"predictive", predictive != 0}, {"slices", slices}});
  }
  curves["impacts"] = impacts;
  return curves;
}

nlohmann::json Bundle::eval() const { return io::read_json(layout_.eval()); }

std::vector<std::uint8_t> Bundle::prediction(const std::string& image_id) const {
  const auto path = layout_.predictions() / (image_id + ".msk");
  if (!fs::exists(path)) throw ContractError("no prediction for image '" + image_id + "'");
  const auto ds = io::read_json(layout_.dataset() / "manifest.json");
  return io::read_u8(path, ds.at("height").get<std::size_t>() * ds.at("width").get<std::size_t>());
}

}  // namespace tracseg::artifacts
