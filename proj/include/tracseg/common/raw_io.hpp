#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace tracseg::io {

namespace fs = std::filesystem;

// Raw tensors on disk are little-endian; the host is assumed little-endian
// (checked at compile time in raw_io.cpp).
void write_f32(const fs::path& path, std::span<const float> values);
std::vector<float> read_f32(const fs::path& path);
std::vector<float> read_f32(const fs::path& path, std::size_t expected_count);

void write_u8(const fs::path& path, std::span<const std::uint8_t> values);
std::vector<std::uint8_t> read_u8(const fs::path& path, std::size_t expected_count);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

/// Writes `j` with two-space indentation and a trailing newline.
void write_json(const fs::path& path, const nlohmann::json& j);
nlohmann::json read_json(const fs::path& path);

std::string read_bytes(const fs::path& path);

}  // namespace tracseg::io
