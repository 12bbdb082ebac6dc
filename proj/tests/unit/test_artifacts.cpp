#include <doctest.h>

#include <fstream>

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "bundle_fixture.hpp"
#include "helpers.hpp"
#include "tracseg/artifacts/bundle.hpp"
#include "tracseg/common/errors.hpp"

using namespace tracseg;
using namespace tracseg::artifacts;
namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_text(const fs::path& p, const std::string& text) {
  fs::permissions(p, fs::perms::owner_write, fs::perm_options::add);
  std::ofstream(p, std::ios::binary | std::ios::trunc) << text;
}

}  // namespace

TEST_SUITE("artifacts") {

TEST_CASE("sha256 of known inputs") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("a sealed pipeline bundle opens and indexes six kinds") {
  const auto& root = testing::sealed_bundle();
  CHECK(is_sealed(root));
  const auto bundle = Bundle::open(root);
  const auto& m = bundle.manifest();
  CHECK(m.at("kinds").size() == 6);
  for (const auto& kind : bundle_kinds()) CHECK(m.at("kinds").contains(kind));
  for (const char* key : {"format_version", "tool_version", "created", "dataset_sha", "checkpoint_run",
                          "selected_epochs", "threshold", "grad_scope"})
    CHECK(m.contains(key));
  CHECK(m.at("selected_epochs") == nlohmann::json{6, 7, 8});
  CHECK(bundle.etag() == "\"" + sha256_file(root / "bundle.json") + "\"");
  CHECK_FALSE(bundle.explanations().empty());
  CHECK(bundle.matrix(1).cols == 3 * bundle.matrix(1).rows);
  CHECK(bundle.features(2).contains("curves"));
  const auto id = bundle.dataset().test.items.front().image.id;
  CHECK(bundle.prediction(id).size() == 16u * 16u);
  CHECK_THROWS_AS(ensure_writable(root), ConfigError);
  const auto perms = fs::status(root / "explanations" / "explanations.json").permissions();
  CHECK((perms & fs::perms::owner_write) == fs::perms::none);
}

TEST_CASE("sealing twice leaves the manifest unchanged") {
  testing::TempDir dir;
  const auto root = testing::copy_bundle(dir / "b");
  const auto before = read_text(root / "bundle.json");
  seal_bundle(root);
  CHECK(read_text(root / "bundle.json") == before);
}

TEST_CASE("tampering is detected and names the file") {
  testing::TempDir dir;
  const auto root = testing::copy_bundle(dir / "b");
  const auto target = root / "explanations" / "explanations.csv";
  write_text(target, read_text(target) + "x");
  try {
    Bundle::open(root);
    FAIL("expected an integrity error");
  } catch (const IntegrityError& e) {
    CHECK(std::string(e.what()).find("explanations/explanations.csv") != std::string::npos);
  }
}

TEST_CASE("unexpected and missing files are integrity errors") {
  testing::TempDir dir;
  auto root = testing::copy_bundle(dir / "extra");
  fs::permissions(root / "features", fs::perms::owner_write, fs::perm_options::add);
  std::ofstream(root / "features" / "stray.txt") << "hi";
  CHECK_THROWS_AS(Bundle::open(root), IntegrityError);

  root = testing::copy_bundle(dir / "missing");
  fs::permissions(root / "train_influence", fs::perms::owner_write, fs::perm_options::add);
  fs::remove(root / "train_influence" / "matrix_1.f32");
  CHECK_THROWS_AS(Bundle::open(root), IntegrityError);
}

TEST_CASE("reports may change without breaking the seal") {
  testing::TempDir dir;
  const auto root = testing::copy_bundle(dir / "b");
  fs::create_directories(root / "reports");
  std::ofstream(root / "reports" / "extra.csv") << "a,b\n";
  CHECK_NOTHROW(Bundle::open(root));
}

TEST_CASE("unsealed bundles and missing kinds") {
  testing::TempDir dir;
  const auto root = testing::copy_bundle(dir / "b");
  fs::permissions(root, fs::perms::owner_write, fs::perm_options::add);
  fs::remove(root / "bundle.json");
  CHECK_FALSE(is_sealed(root));
  CHECK_THROWS_AS(Bundle::open(root), IntegrityError);
  CHECK_NOTHROW(ensure_writable(root));

  fs::permissions(root / "features", fs::perms::owner_all, fs::perm_options::add);
  for (const auto& e : fs::recursive_directory_iterator(root / "features"))
    fs::permissions(e.path(), fs::perms::owner_write, fs::perm_options::add);
  fs::remove_all(root / "features");
  try {
    seal_bundle(root);
    FAIL("expected a prerequisite error");
  } catch (const PrerequisiteError& e) {
    CHECK(std::string(e.what()).find("features") != std::string::npos);
    CHECK(e.required_command() == "faithfulness");
  }
}

TEST_CASE("format and tool version checks") {
  testing::TempDir dir;
  auto root = testing::copy_bundle(dir / "v");
  auto manifest = nlohmann::json::parse(read_text(root / "bundle.json"));
  manifest["tool_version"] = "0.0.1-other";
  write_text(root / "bundle.json", manifest.dump(2));

  std::ostringstream log;
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(log);
  auto previous = spdlog::default_logger();
  spdlog::set_default_logger(std::make_shared<spdlog::logger>("capture", sink));
  CHECK_NOTHROW(Bundle::open(root));
  spdlog::set_default_logger(previous);
  CHECK(log.str().find("0.0.1-other") != std::string::npos);

  manifest["format_version"] = 99;
  write_text(root / "bundle.json", manifest.dump(2));
  CHECK_THROWS_AS(Bundle::open(root), UnsupportedFormatError);
}

}
