#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracseg/data/dataset.hpp"
#include "tracseg/influence/explanation.hpp"
#include "tracseg/segnet/checkpoint.hpp"

namespace tracseg::artifacts {

inline constexpr int kBundleFormatVersion = 1;

/// Bundle directory layout. Every stage reads and writes through these paths.
struct BundleLayout {
  std::filesystem::path root;

  std::filesystem::path manifest() const { return root / "bundle.json"; }
  std::filesystem::path dataset() const { return root / "dataset"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path gradients() const { return root / "checkpoints" / "grads"; }
  std::filesystem::path eval() const { return root / "checkpoints" / "eval.json"; }
  std::filesystem::path predictions() const { return root / "checkpoints" / "predictions"; }
  std::filesystem::path explanations() const { return root / "explanations"; }
  std::filesystem::path train_influence() const { return root / "train_influence"; }
  std::filesystem::path features() const { return root / "features"; }
  /// Plot and table exports; not part of the sealed content.
  std::filesystem::path reports() const { return root / "reports"; }
};

/// The six content kinds of a complete bundle, in manifest order.
const std::vector<std::string>& bundle_kinds();

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(std::string_view bytes);

struct KindIndex {
  std::map<std::string, std::string> files;  // path relative to root -> sha256
  std::string sha;                            // hash over the sorted file list
};

/// Files of `kind` currently on disk, hashed. Throws PrerequisiteError if absent.
KindIndex index_kind(const BundleLayout& layout, const std::string& kind);

/// Seals the bundle at `root`: hashes every kind, writes bundle.json and makes
/// the content read-only. Sealing a sealed bundle verifies it and returns the
/// existing manifest unchanged.
nlohmann::json seal_bundle(const std::filesystem::path& root);

bool is_sealed(const std::filesystem::path& root);
/// Throws ConfigError when the bundle is sealed; used by stages before writing.
void ensure_writable(const std::filesystem::path& root);

/// Read access to a verified, sealed bundle.
class Bundle {
 public:
  /// Verifies every hash; throws IntegrityError naming the first mismatching file.
  static Bundle open(const std::filesystem::path& root);

  const BundleLayout& layout() const noexcept { return layout_; }
  const nlohmann::json& manifest() const noexcept { return manifest_; }
  /// Strong validator derived from the manifest.
  const std::string& etag() const noexcept { return etag_; }

  data::DatasetSplits dataset() const;
  segnet::CheckpointSet checkpoints() const;
  std::vector<influence::ExplanationVector> explanations() const;
  influence::GlobalExplainerSet global_explainers() const;
  influence::TrainInfluenceMatrix matrix(int cls) const;
  nlohmann::json features(int cls) const;
  nlohmann::json eval() const;
  /// Predicted label map of an image id.
  std::vector<std::uint8_t> prediction(const std::string& image_id) const;

 private:
  BundleLayout layout_;
  nlohmann::json manifest_;
  std::string etag_;
};

}  // namespace tracseg::artifacts
