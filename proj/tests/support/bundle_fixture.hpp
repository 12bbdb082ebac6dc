#pragma once

#include <filesystem>

namespace tracseg::testing {

/// Sealed bundle from one micro pipeline run, built on first use and shared by the process.
const std::filesystem::path& sealed_bundle();

/// Writable copy of sealed_bundle() at `dest` (still sealed, files made writable).
std::filesystem::path copy_bundle(const std::filesystem::path& dest);

}  // namespace tracseg::testing
