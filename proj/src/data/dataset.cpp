#include "tracseg/data/dataset.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <utility>

#include "tracseg/common/errors.hpp"
#include "tracseg/common/raw_io.hpp"

namespace tracseg::data {

namespace fs = std::filesystem;

bool LabelMask::contains(int label) const {
  return std::find(labels.begin(), labels.end(), static_cast<std::uint8_t>(label)) != labels.end();
}

int LabelMask::pixel_count(int label) const {
  return static_cast<int>(std::count(labels.begin(), labels.end(), static_cast<std::uint8_t>(label)));
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

const Sample* Dataset::find(std::string_view id) const {
  for (const auto& s : items)
    if (s.image.id == id) return &s;
  return nullptr;
}

const Sample& Dataset::by_id(std::string_view id) const {
  if (const Sample* s = find(id)) return *s;
  throw ContractError("no image with id '" + std::string(id) + "' in " + std::string(to_string(split)));
}

const Dataset& DatasetSplits::get(Split split) const {
  switch (split) {
    case Split::train: return train;
    case Split::val: return val;
    case Split::test: return test;
  }
  return train;
}

Dataset& DatasetSplits::get(Split split) {
  return const_cast<Dataset&>(std::as_const(*this).get(split));
}

namespace {

const Sample* first_sample(const DatasetSplits& s) {
  for (const Dataset* d : {&s.train, &s.val, &s.test})
    if (!d->items.empty()) return &d->items.front();
  return nullptr;
}

}  // namespace

int DatasetSplits::channels() const {
  const Sample* s = first_sample(*this);
  return s ? s->image.channels : 0;
}

int DatasetSplits::height() const {
  const Sample* s = first_sample(*this);
  return s ? s->image.height : 0;
}

int DatasetSplits::width() const {
  const Sample* s = first_sample(*this);
  return s ? s->image.width : 0;
}

void validate(const DatasetSplits& splits) {
  const Sample* ref = first_sample(splits);
  if (!ref) throw ContractError("dataset is empty");
  std::set<std::string> ids;
  std::map<std::string, Split> patient_split;
  const int max_label = static_cast<int>(splits.class_names.size()) - 1;
  for (Split sp : {Split::train, Split::val, Split::test}) {
    for (const auto& s : splits.get(sp).items) {
      const auto& im = s.image;
      if (im.channels != ref->image.channels || im.height != ref->image.height ||
          im.width != ref->image.width)
        throw ContractError("image " + im.id + " has a different shape from the rest of the dataset");
      if (im.values.size() != static_cast<std::size_t>(im.channels) * im.plane())
        throw ContractError("image " + im.id + " payload does not match its shape");
      if (s.mask.height != im.height || s.mask.width != im.width ||
          s.mask.labels.size() != im.plane())
        throw ContractError("mask of " + im.id + " does not match its image");
      for (auto l : s.mask.labels)
        if (l > max_label) throw ContractError("mask of " + im.id + " has out-of-range label");
      if (!ids.insert(im.id).second) throw ContractError("duplicate image id " + im.id);
      auto [it, inserted] = patient_split.emplace(im.patient_id, sp);
      if (!inserted && it->second != sp)
        throw ContractError("patient " + im.patient_id + " appears in two splits");
    }
  }
}

void save_dataset(const DatasetSplits& splits, const fs::path& root) {
  validate(splits);
  fs::create_directories(root);
  nlohmann::json items = nlohmann::json::array();
  for (Split sp : {Split::train, Split::val, Split::test}) {
    const auto split_dir = root / std::string(to_string(sp));
    fs::create_directories(split_dir);
    for (const auto& s : splits.get(sp).items) {
      io::write_f32(split_dir / (s.image.id + ".img"), s.image.values);
      io::write_u8(split_dir / (s.image.id + ".msk"), s.mask.labels);
      items.push_back({{"id", s.image.id},
                       {"patient_id", s.image.patient_id},
                       {"slice_index", s.image.slice_index},
                       {"split", to_string(sp)}});
    }
  }
  nlohmann::json manifest = {
      {"version", kDatasetFormatVersion},
      {"channels", splits.channels()},
      {"height", splits.height()},
      {"width", splits.width()},
      {"class_names", splits.class_names},
      {"provenance",
       {{"source", splits.provenance.source},
        {"seed", splits.provenance.seed},
        {"preprocessing", splits.provenance.preprocessing},
        {"parameters", splits.provenance.parameters}}},
      {"items", items},
  };
  io::write_json(root / "manifest.json", manifest);
}

DatasetSplits load_dataset(const fs::path& root) {
  const auto manifest_path = root / "manifest.json";
  if (!fs::exists(manifest_path))
    throw PrerequisiteError("no dataset manifest at " + manifest_path.string(), "synth");
  const auto m = io::read_json(manifest_path);
  if (m.at("version").get<int>() != kDatasetFormatVersion)
    throw UnsupportedFormatError("dataset format version " + m.at("version").dump() + " not supported");
  DatasetSplits out;
  out.class_names = m.at("class_names").get<std::vector<std::string>>();
  const auto& prov = m.at("provenance");
  out.provenance.source = prov.at("source").get<std::string>();
  out.provenance.seed = prov.at("seed").get<std::uint64_t>();
  out.provenance.preprocessing = prov.at("preprocessing").get<std::vector<std::string>>();
  out.provenance.parameters = prov.value("parameters", nlohmann::json::object());
  const int c = m.at("channels"), h = m.at("height"), w = m.at("width");
  out.train.split = Split::train;
  out.val.split = Split::val;
  out.test.split = Split::test;
  for (const auto& item : m.at("items")) {
    const Split sp = split_from_string(item.at("split").get<std::string>());
    Sample s;
    s.image.id = item.at("id").get<std::string>();
    s.image.patient_id = item.at("patient_id").get<std::string>();
    s.image.slice_index = item.at("slice_index").get<int>();
    s.image.channels = c;
    s.image.height = h;
    s.image.width = w;
    const auto dir = root / std::string(to_string(sp));
    s.image.values = io::read_f32(dir / (s.image.id + ".img"), static_cast<std::size_t>(c) * h * w);
    s.mask.height = h;
    s.mask.width = w;
    s.mask.labels = io::read_u8(dir / (s.image.id + ".msk"), static_cast<std::size_t>(h) * w);
    s.mask.class_names = out.class_names;
    out.get(sp).items.push_back(std::move(s));
  }
  for (Split sp : {Split::train, Split::val, Split::test}) out.get(sp).provenance = out.provenance;
  validate(out);
  return out;
}

}  // namespace tracseg::data
