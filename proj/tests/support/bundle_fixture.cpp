#include "bundle_fixture.hpp"

#include "helpers.hpp"

namespace tracseg::testing {

namespace fs = std::filesystem;

const fs::path& sealed_bundle() {
  static TempDir dir("tracseg-bundle");
  static const fs::path root = [] {
    auto config = micro_run_config(dir / "bundle");
    pipeline::run_all(config);
    return config.out;
  }();
  return root;
}

fs::path copy_bundle(const fs::path& dest) {
  fs::copy(sealed_bundle(), dest, fs::copy_options::recursive);
  fs::permissions(dest, fs::perms::owner_all, fs::perm_options::add);
  for (const auto& e : fs::recursive_directory_iterator(dest))
    fs::permissions(e.path(), fs::perms::owner_write, fs::perm_options::add);
  return dest;
}

}  // namespace tracseg::testing
