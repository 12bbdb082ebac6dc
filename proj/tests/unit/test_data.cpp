#include <doctest.h>

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <random>
#include <set>

#include "helpers.hpp"
#include "tracseg/common/errors.hpp"
#include "tracseg/data/brats.hpp"
#include "tracseg/data/dataset.hpp"
#include "tracseg/data/nifti.hpp"
#include "tracseg/data/preprocess.hpp"
#include "tracseg/data/synthetic.hpp"

using namespace tracseg;
using namespace tracseg::data;

namespace {

// Hand-assembled NIfTI-1 header: fields at their byte offsets, independent of the reader.
std::vector<char> nifti_bytes(std::array<std::int16_t, 3> shape, std::int16_t datatype, std::int16_t bitpix,
                              const std::vector<char>& payload, float slope = 0, float inter = 0,
                              bool swap = false, const char* magic = "n+1") {
  std::vector<char> buf(352, 0);
  auto put = [&](std::size_t offset, auto value) {
    char bytes[sizeof(value)];
    std::memcpy(bytes, &value, sizeof(value));
    if (swap) std::reverse(bytes, bytes + sizeof(value));
    std::memcpy(buf.data() + offset, bytes, sizeof(value));
  };
  put(0, std::int32_t{348});
  put(40, std::int16_t{3});
  for (int i = 0; i < 3; ++i) put(42 + 2 * i, shape[i]);
  for (int i = 3; i < 7; ++i) put(42 + 2 * i, std::int16_t{1});
  put(70, datatype);
  put(72, bitpix);
  for (int i = 0; i < 8; ++i) put(76 + 4 * i, 1.0f);
  put(108, 352.0f);
  put(112, slope);
  put(116, inter);
  std::memcpy(buf.data() + 344, magic, 4);
  buf.insert(buf.end(), payload.begin(), payload.end());
  return buf;
}

template <typename T>
std::vector<char> le_payload(const std::vector<T>& values, bool swap = false) {
  std::vector<char> out;
  for (T v : values) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    if (swap) std::reverse(bytes, bytes + sizeof(T));
    out.insert(out.end(), bytes, bytes + sizeof(T));
  }
  return out;
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream(p, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("nifti reader decodes a hand-written int16 volume with scaling") {
  testing::TempDir dir;
  const std::vector<std::int16_t> raw{0, 1, 2, 3, 4, 5};
  write_bytes(dir / "v.nii", nifti_bytes({2, 3, 1}, 4, 16, le_payload(raw), 2.0f, 1.0f));
  const auto v = read_nifti(dir / "v.nii");
  CHECK(v.shape == std::array<int, 3>{2, 3, 1});
  REQUIRE(v.voxels.size() == 6);
  // x fastest: voxel (1, 2, 0) is raw index 1 + 2*2 = 5 -> 2*5 + 1
  CHECK(v.at(1, 2, 0) == doctest::Approx(11.0));
  CHECK(v.at(0, 0, 0) == doctest::Approx(1.0));
}

TEST_CASE("nifti reader handles byte-swapped headers and payloads") {
  testing::TempDir dir;
  const std::vector<float> raw{1.5f, -2.0f, 3.25f, 0.0f};
  write_bytes(dir / "be.nii", nifti_bytes({2, 2, 1}, 16, 32, le_payload(raw, true), 0, 0, true));
  const auto v = read_nifti(dir / "be.nii");
  CHECK(v.header.byte_swapped);
  CHECK(v.at(0, 0, 0) == doctest::Approx(1.5));
  CHECK(v.at(1, 0, 0) == doctest::Approx(-2.0));
  CHECK(v.at(0, 1, 0) == doctest::Approx(3.25));
}

TEST_CASE("nifti reader inflates gzip files") {
  testing::TempDir dir;
  const std::vector<std::uint8_t> raw{7, 8, 9, 10, 11, 12, 13, 14};
  const auto bytes = nifti_bytes({2, 2, 2}, 2, 8, le_payload(raw));
  gzFile f = gzopen((dir / "v.nii.gz").c_str(), "wb");
  gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
  gzclose(f);
  const auto v = read_nifti(dir / "v.nii.gz");
  CHECK(v.at(1, 1, 1) == doctest::Approx(14));
}

TEST_CASE("nifti reader rejects bad magic, unknown datatypes and short payloads") {
  testing::TempDir dir;
  const std::vector<std::int16_t> raw{1, 2, 3, 4};
  write_bytes(dir / "magic.nii", nifti_bytes({2, 2, 1}, 4, 16, le_payload(raw), 0, 0, false, "xyz"));
  CHECK_THROWS_AS(read_nifti(dir / "magic.nii"), UnsupportedFormatError);

  write_bytes(dir / "u16.nii", nifti_bytes({2, 2, 1}, 512, 16, le_payload(raw)));
  try {
    read_nifti(dir / "u16.nii");
    FAIL("expected an unsupported datatype error");
  } catch (const UnsupportedFormatError& e) {
    CHECK(std::string(e.what()).find("512") != std::string::npos);
  }

  write_bytes(dir / "short.nii", nifti_bytes({2, 2, 2}, 4, 16, le_payload(raw)));
  CHECK_THROWS_AS(read_nifti(dir / "short.nii"), CorruptFileError);
}

TEST_CASE("nifti writer output is read back unchanged") {
  testing::TempDir dir;
  std::vector<double> voxels(4 * 3 * 2);
  for (std::size_t i = 0; i < voxels.size(); ++i) voxels[i] = static_cast<double>(i) - 5.0;
  for (const char* name : {"w.nii", "w.nii.gz"}) {
    write_nifti(dir / name, {4, 3, 2}, voxels, NiftiDatatype::float32);
    const auto v = read_nifti(dir / name);
    CHECK(v.voxels == voxels);
  }
}

TEST_CASE("central slice window and label remapping") {
  CHECK(central_window_start(155, 10) == 72);  // slices 72..81, i.e. 73..82 counting from 1
  CHECK(central_window_start(12, 10) == 1);
  CHECK(central_window_start(10, 10) == 0);
  CHECK(remap_brats_label(4) == 3);
  CHECK(remap_brats_label(2) == 2);
  CHECK(remap_brats_label(0) == 0);
}

TEST_CASE("brats layout ingestion cuts central slices and reports missing modalities") {
  testing::TempDir dir;
  const std::array<int, 3> shape{8, 8, 12};
  const std::size_t n = 8 * 8 * 12;
  auto volume = [&](double offset) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = offset + static_cast<double>(i % 97);
    return v;
  };
  for (int p = 0; p < 4; ++p) {
    const auto pdir = dir / ("BraTS_" + std::to_string(p));
    std::filesystem::create_directories(pdir);
    const std::string stem = "BraTS_" + std::to_string(p);
    for (const char* m : {"t1", "t1ce", "t2", "flair"})
      write_nifti(pdir / (stem + "_" + m + ".nii.gz"), shape, volume(p), NiftiDatatype::float32);
    std::vector<double> seg(n, 0);
    for (std::size_t i = 0; i < n; i += 5) seg[i] = 4;
    for (std::size_t i = 1; i < n; i += 7) seg[i] = 2;
    write_nifti(pdir / (stem + "_seg.nii.gz"), shape, seg, NiftiDatatype::uint8);
  }
  BratsIngestOptions opt;
  opt.train_fraction = 0.5;
  opt.val_fraction = 0.25;
  const auto splits = ingest_brats_layout(dir.path(), opt);
  CHECK(splits.train.n() + splits.val.n() + splits.test.n() == 40);
  std::set<int> slices;
  for (const auto& s : splits.train.items) {
    slices.insert(s.image.slice_index);
    CHECK(s.image.channels == 4);
    CHECK(s.image.height == 8);
    for (auto l : s.mask.labels) CHECK(l != 4);
  }
  CHECK(*slices.begin() == 1);
  CHECK(*slices.rbegin() == 10);

  std::filesystem::remove(dir / "BraTS_2" / "BraTS_2_flair.nii.gz");
  try {
    ingest_brats_layout(dir.path(), opt);
    FAIL("expected an ingestion error");
  } catch (const IngestionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("BraTS_2") != std::string::npos);
    CHECK(msg.find("flair") != std::string::npos);
  }
}

TEST_CASE("intensity normalization maps each channel onto [-1, 1]") {
  MultimodalImage im;
  im.channels = 2;
  im.height = 1;
  im.width = 3;
  im.values = {0, 5, 10, 3, 3, 3};
  const auto out = normalize_intensity(im);
  CHECK(out.values[0] == doctest::Approx(-1));
  CHECK(out.values[1] == doctest::Approx(0));
  CHECK(out.values[2] == doctest::Approx(1));
  CHECK(out.values[4] == doctest::Approx(0));  // constant channel
}

TEST_CASE("augmentation moves image and mask together") {
  MultimodalImage im;
  im.channels = 1;
  im.height = 2;
  im.width = 3;
  im.values = {0, 1, 2, 3, 4, 5};
  LabelMask mask{2, 3, {0, 1, 2, 0, 1, 2}, {}};
  AugmentDecision mirror;
  mirror.mirror = true;
  const auto [a, b] = apply_augmentation(im, mask, mirror);
  CHECK(a.values == std::vector<float>{2, 1, 0, 5, 4, 3});
  CHECK(b.labels == std::vector<std::uint8_t>{2, 1, 0, 2, 1, 0});
  CHECK(AugmentDecision{}.is_identity());
  const auto [c, d] = apply_augmentation(im, mask, AugmentDecision{});
  CHECK(c.values == im.values);

  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto dec = draw_augmentation(48, 48, rng);
    if (dec.crop) {
      CHECK(dec.crop_h >= static_cast<int>(0.85 * 48));
      CHECK(dec.crop_y0 + dec.crop_h <= 48);
    }
  }
}

TEST_CASE("synthetic corpus is deterministic, patient-disjoint and has nested classes") {
  const auto cfg = testing::micro_corpus(6, 5, 32);
  const auto a = generate_synthetic(cfg);
  const auto b = generate_synthetic(cfg);
  REQUIRE(a.train.n() == b.train.n());
  CHECK(a.train.items[0].image.values == b.train.items[0].image.values);
  CHECK(a.train.items[0].mask.labels == b.train.items[0].mask.labels);
  std::set<std::string> train_patients, other_patients;
  for (const auto& s : a.train.items) train_patients.insert(s.image.patient_id);
  for (const auto* ds : {&a.val, &a.test})
    for (const auto& s : ds->items) other_patients.insert(s.image.patient_id);
  for (const auto& p : other_patients) CHECK(train_patients.count(p) == 0);
  int with_all = 0;
  for (const auto& s : a.train.items)
    with_all += s.mask.contains(1) && s.mask.contains(2) && s.mask.contains(3);
  CHECK(with_all > 0);
  auto other = cfg;
  other.seed = cfg.seed + 1;
  CHECK(generate_synthetic(other).train.items[0].image.values != a.train.items[0].image.values);
  CHECK_THROWS_AS(generate_synthetic([] { auto c = SyntheticConfig{}; c.image_size = 4; return c; }()), ConfigError);
}

TEST_CASE("dataset round-trips through disk and reports a missing manifest") {
  testing::TempDir dir;
  const auto splits = generate_synthetic(testing::micro_corpus());
  save_dataset(splits, dir / "ds");
  const auto back = load_dataset(dir / "ds");
  REQUIRE(back.test.n() == splits.test.n());
  CHECK(back.test.items[1].image.values == splits.test.items[1].image.values);
  CHECK(back.test.items[1].mask.labels == splits.test.items[1].mask.labels);
  CHECK(back.class_names == splits.class_names);
  try {
    load_dataset(dir / "nothing");
    FAIL("expected a prerequisite error");
  } catch (const PrerequisiteError& e) {
    CHECK(e.required_command() == "synth");
  }
}

TEST_CASE("validation rejects patients shared across splits") {
  auto splits = generate_synthetic(testing::micro_corpus());
  splits.test.items.push_back(splits.train.items.front());
  splits.test.items.back().image.id = "dup";
  CHECK_THROWS(validate(splits));
}

TEST_CASE("hand-written 4x4x2 float32 file round-trips voxel by voxel") {
  testing::TempDir dir;
  std::vector<float> raw(32);
  for (int i = 0; i < 32; ++i) raw[i] = 0.25f * static_cast<float>(i) - 3.0f;
  write_bytes(dir / "v.nii", nifti_bytes({4, 4, 2}, 16, 32, le_payload(raw)));
  const auto v = read_nifti(dir / "v.nii");
  REQUIRE(v.voxels.size() == 32);
  for (int i = 0; i < 32; ++i) CHECK(v.voxels[i] == static_cast<double>(raw[i]));
}

TEST_CASE("a BraTS-sized header reports a 240x240x155 volume") {
  testing::TempDir dir;
  write_bytes(dir / "h.nii", nifti_bytes({240, 240, 155}, 4, 16, {}));
  const auto h = read_nifti_header(dir / "h.nii");
  CHECK(h.dim[0] == 3);
  CHECK(h.dim[1] == 240);
  CHECK(h.dim[2] == 240);
  CHECK(h.dim[3] == 155);
  CHECK_THROWS_AS(read_nifti(dir / "h.nii"), CorruptFileError);
}

TEST_CASE("window covering the whole extent keeps every slice") {
  CHECK(central_window_start(155, 155) == 0);
}

TEST_CASE("normalization maps {0, 25, 100} to {-1, -0.5, 1} and 50 of [0, 100] to 0") {
  MultimodalImage im;
  im.channels = 1;
  im.height = 1;
  im.width = 4;
  im.values = {0, 25, 100, 50};
  const auto out = normalize_intensity(im);
  CHECK(out.values[0] == doctest::Approx(-1));
  CHECK(out.values[1] == doctest::Approx(-0.5));
  CHECK(out.values[2] == doctest::Approx(1));
  CHECK(out.values[3] == doctest::Approx(0));
}

TEST_CASE("mirroring twice is the identity and random augmentation never invents labels") {
  const auto splits = generate_synthetic(testing::micro_corpus(2, 2, 32));
  const auto& s = splits.train.items.front();
  AugmentDecision mirror;
  mirror.mirror = true;
  const auto [i1, m1] = apply_augmentation(s.image, s.mask, mirror);
  const auto [i2, m2] = apply_augmentation(i1, m1, mirror);
  CHECK(i2.values == s.image.values);
  CHECK(m2.labels == s.mask.labels);

  std::set<std::uint8_t> input_labels(s.mask.labels.begin(), s.mask.labels.end());
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const auto [img, mask] = augment(s.image, s.mask, rng);
    for (auto l : mask.labels) REQUIRE(input_labels.count(l) == 1);
  }
}

TEST_CASE("default synthetic size gives 200 slices with labels in {0..3}") {
  SyntheticConfig cfg;
  cfg.image_size = 16;  // keeps the test fast; counts do not depend on size
  const auto splits = generate_synthetic(cfg);
  CHECK(splits.train.n() + splits.val.n() + splits.test.n() == 200);
  for (const auto* ds : {&splits.train, &splits.val, &splits.test})
    for (const auto& s : ds->items)
      for (auto l : s.mask.labels) REQUIRE(l <= 3);
}

}
