#include "tracseg/common/raw_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tracseg/common/errors.hpp"

namespace tracseg::io {

static_assert(std::endian::native == std::endian::little,
              "raw tensor files are little-endian; big-endian hosts need byte swapping");

namespace {

void write_raw(const fs::path& path, const void* data, std::size_t bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_f32(const fs::path& path, std::span<const float> values) {
  write_raw(path, values.data(), values.size_bytes());
}

std::vector<float> read_f32(const fs::path& path) {
  const std::string bytes = read_bytes(path);
  if (bytes.size() % sizeof(float) != 0)
    throw CorruptFileError("f32 payload size not a multiple of 4: " + path.string());
  std::vector<float> out(bytes.size() / sizeof(float));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::vector<float> read_f32(const fs::path& path, std::size_t expected_count) {
  auto out = read_f32(path);
  if (out.size() != expected_count)
    throw CorruptFileError("expected " + std::to_string(expected_count) + " floats in " +
                           path.string() + ", found " + std::to_string(out.size()));
  return out;
}

void write_u8(const fs::path& path, std::span<const std::uint8_t> values) {
  write_raw(path, values.data(), values.size_bytes());
}

std::vector<std::uint8_t> read_u8(const fs::path& path, std::size_t expected_count) {
  const std::string bytes = read_bytes(path);
  if (bytes.size() != expected_count)
    throw CorruptFileError("expected " + std::to_string(expected_count) + " bytes in " +
                           path.string() + ", found " + std::to_string(bytes.size()));
  return {bytes.begin(), bytes.end()};
}

void write_text(const fs::path& path, const std::string& text) {
  write_raw(path, text.data(), text.size());
}

std::string read_text(const fs::path& path) { return read_bytes(path); }

void write_json(const fs::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_bytes(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptFileError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace tracseg::io
