#include "tracseg/influence/gradient_cache.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <atomic>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "tracseg/common/errors.hpp"
#include "tracseg/common/raw_io.hpp"

namespace tracseg::influence {

namespace fs = std::filesystem;

std::string_view to_string(GradScope scope) { return scope == GradScope::all ? "all" : "last-layer"; }

GradScope grad_scope_from_string(std::string_view name) {
  if (name == "all") return GradScope::all;
  if (name == "last-layer") return GradScope::last_layer;
  throw ConfigError("unknown gradient scope '" + std::string(name) + "' (expected all or last-layer)");
}

MappedFile::MappedFile(const fs::path& path) {
  const int fd = ::open(path.c_str(), O_RDONLY);
  if (fd < 0) throw CorruptFileError("cannot open gradient file " + path.string());
  struct stat st {};
  if (::fstat(fd, &st) != 0) {
    ::close(fd);
    throw CorruptFileError("cannot stat " + path.string());
  }
  size_ = static_cast<std::size_t>(st.st_size);
  if (size_ > 0) {
    data_ = ::mmap(nullptr, size_, PROT_READ, MAP_PRIVATE, fd, 0);
    if (data_ == MAP_FAILED) {
      data_ = nullptr;
      ::close(fd);
      throw CorruptFileError("cannot map " + path.string());
    }
  }
  ::close(fd);
}

MappedFile::~MappedFile() {
  if (data_) ::munmap(data_, size_);
}

std::span<const float> MappedFile::floats() const noexcept {
  return {static_cast<const float*>(data_), size_ / sizeof(float)};
}

namespace {

fs::path gradient_path(const fs::path& dir, int epoch, const std::string& image_id, int cls) {
  return dir / std::to_string(epoch) / fmt::format("{}.{}.f32", image_id, cls);
}

bool compatible(const nlohmann::json& index, const segnet::CheckpointSet& checkpoints,
                const GradientCacheOptions& options, std::size_t gradient_size,
                const std::vector<const data::Dataset*>& datasets) {
  if (index.value("format_version", 0) != kGradientCacheFormatVersion) return false;
  if (index.at("epochs").get<std::vector<int>>() != checkpoints.selection) return false;
  if (index.at("threshold").get<double>() != options.threshold) return false;
  if (index.at("scope").get<std::string>() != to_string(options.scope)) return false;
  if (index.at("gradient_size").get<std::size_t>() != gradient_size) return false;
  if (index.value("run_id", std::string()) != checkpoints.run_id) return false;
  std::set<std::string> ids;
  for (const auto& e : index.at("entries")) ids.insert(e.at("image_id").get<std::string>());
  for (const auto* ds : datasets)
    for (const auto& s : ds->items)
      if (!ids.count(s.image.id)) return false;
  return true;
}

}  // namespace

GradientCache GradientCache::build(const fs::path& dir, const segnet::CheckpointSet& checkpoints,
                                   const std::vector<const data::Dataset*>& datasets,
                                   const GradientCacheOptions& options) {
  const auto selected = checkpoints.selected();
  const segnet::UNet probe(checkpoints.model);
  const std::size_t gradient_size = probe.gradient_size(options.scope);
  if (fs::exists(dir / "index.json")) {
    if (compatible(io::read_json(dir / "index.json"), checkpoints, options, gradient_size, datasets)) {
      spdlog::info("reusing gradient cache at {}", dir.string());
      return open(dir);
    }
    spdlog::info("gradient cache at {} is stale, rebuilding", dir.string());
    fs::remove_all(dir);
  }

  std::vector<const data::Sample*> samples;
  for (const auto* ds : datasets)
    for (const auto& s : ds->items) samples.push_back(&s);

  const RegionGradientOptions rg_options{options.threshold, options.scope};
  nlohmann::json entries = nlohmann::json::array();
  std::vector<double> learning_rates;
  for (const auto* ckpt : selected) {
    learning_rates.push_back(ckpt->learning_rate);
    const segnet::UNet model = ckpt->materialize(checkpoints.model);
    fs::create_directories(dir / std::to_string(ckpt->epoch));
    std::vector<std::vector<RegionGradient>> results(samples.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    auto worker = [&] {
      for (std::size_t i = next++; i < samples.size(); i = next++) {
        try {
          results[i] = region_gradients(model, ckpt->epoch, *samples[i], rg_options);
          for (const auto& rg : results[i])
            if (rg.present()) io::write_f32(gradient_path(dir, ckpt->epoch, rg.image_id, rg.class_id), *rg.grad);
          for (auto& rg : results[i]) rg.grad.reset();
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    };
    const int n_workers = std::max(1, options.workers);
    std::vector<std::thread> threads;
    for (int w = 1; w < n_workers; ++w) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
    // Index entries are appended in dataset order so the index is deterministic.
    for (const auto& per_image : results)
      for (const auto& rg : per_image)
        entries.push_back({{"epoch", rg.epoch},
                           {"image_id", rg.image_id},
                           {"class", rg.class_id},
                           {"pixels", rg.region_pixel_count},
                           {"present", rg.region_pixel_count > 0}});
    spdlog::info("gradient cache: epoch {} done ({} images)", ckpt->epoch, samples.size());
  }
  io::write_json(dir / "index.json", {{"format_version", kGradientCacheFormatVersion},
                                      {"run_id", checkpoints.run_id},
                                      {"epochs", checkpoints.selection},
                                      {"learning_rates", learning_rates},
                                      {"threshold", options.threshold},
                                      {"scope", to_string(options.scope)},
                                      {"gradient_size", gradient_size},
                                      {"n_classes", checkpoints.model.n_classes - 1},
                                      {"entries", entries}});
  return open(dir);
}

GradientCache GradientCache::open(const fs::path& dir) {
  if (!fs::exists(dir / "index.json"))
    throw PrerequisiteError("no gradient cache at " + dir.string(), "influence");
  const auto index = io::read_json(dir / "index.json");
  if (index.value("format_version", 0) != kGradientCacheFormatVersion)
    throw UnsupportedFormatError("unsupported gradient cache version in " + dir.string());
  GradientCache cache;
  cache.dir_ = dir;
  cache.epochs_ = index.at("epochs").get<std::vector<int>>();
  cache.learning_rates_ = index.at("learning_rates").get<std::vector<double>>();
  cache.threshold_ = index.at("threshold");
  cache.scope_ = grad_scope_from_string(index.at("scope").get<std::string>());
  cache.gradient_size_ = index.at("gradient_size");
  cache.n_classes_ = index.at("n_classes");
  std::map<int, std::size_t> position;
  for (std::size_t t = 0; t < cache.epochs_.size(); ++t) position[cache.epochs_[t]] = t;
  for (const auto& e : index.at("entries")) {
    const int epoch = e.at("epoch");
    const auto id = e.at("image_id").get<std::string>();
    const int cls = e.at("class");
    Entry entry;
    entry.pixels = e.at("pixels");
    if (e.at("present").get<bool>()) {
      entry.file = std::make_shared<MappedFile>(gradient_path(dir, epoch, id, cls));
      if (entry.file->floats().size() != cache.gradient_size_)
        throw CorruptFileError(fmt::format("gradient file for {} class {} epoch {} has the wrong length", id, cls, epoch));
    }
    cache.entries_.emplace(Key{position.at(epoch), id, cls}, std::move(entry));
  }
  return cache;
}

const GradientCache::Entry& GradientCache::entry(std::size_t t, const std::string& image_id, int cls) const {
  const auto it = entries_.find(Key{t, image_id, cls});
  if (it == entries_.end())
    throw ContractError(fmt::format("gradient cache has no entry for {} class {} at checkpoint #{}", image_id, cls, t));
  return it->second;
}

bool GradientCache::contains(const std::string& image_id) const {
  return entries_.count(Key{0, image_id, 1}) > 0;
}

GradientView GradientCache::get(std::size_t t, const std::string& image_id, int cls) const {
  const Entry& e = entry(t, image_id, cls);
  if (!e.file) return std::nullopt;
  return e.file->floats();
}

std::vector<GradientView> GradientCache::stream(const std::string& image_id, int cls) const {
  std::vector<GradientView> out;
  for (std::size_t t = 0; t < epochs_.size(); ++t) out.push_back(get(t, image_id, cls));
  return out;
}

int GradientCache::region_pixels(std::size_t t, const std::string& image_id, int cls) const {
  return entry(t, image_id, cls).pixels;
}

bool GradientCache::region_present(const std::string& image_id, int cls) const {
  for (std::size_t t = 0; t < epochs_.size(); ++t)
    if (entry(t, image_id, cls).file) return true;
  return false;
}

}  // namespace tracseg::influence
