#include "tracseg/data/nifti.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "tracseg/common/errors.hpp"

namespace tracseg::data {

namespace fs = std::filesystem;

namespace {

// Header field offsets (bytes).
constexpr std::size_t kOffSizeofHdr = 0;
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffMagic = 344;

bool is_gzip(const std::string& bytes) {
  return bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0x1f &&
         static_cast<unsigned char>(bytes[1]) == 0x8b;
}

std::string gunzip_file(const fs::path& path) {
  gzFile gz = gzopen(path.c_str(), "rb");
  if (!gz) throw CorruptFileError("cannot open gzip stream: " + path.string());
  std::string out;
  std::array<char, 1 << 16> buf{};
  for (;;) {
    const int n = gzread(gz, buf.data(), static_cast<unsigned>(buf.size()));
    if (n < 0) {
      int err = 0;
      std::string msg = gzerror(gz, &err);
      gzclose(gz);
      throw CorruptFileError("gzip decode failed for " + path.string() + ": " + msg);
    }
    if (n == 0) break;
    out.append(buf.data(), static_cast<std::size_t>(n));
  }
  gzclose(gz);
  return out;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (is_gzip(bytes)) return gunzip_file(path);
  return bytes;
}

template <typename T>
T load(const std::string& bytes, std::size_t offset, bool swap) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  if (swap) {
    auto* p = reinterpret_cast<unsigned char*>(&v);
    std::reverse(p, p + sizeof(T));
  }
  return v;
}

template <typename T>
void store(std::string& bytes, std::size_t offset, T v) {
  std::memcpy(bytes.data() + offset, &v, sizeof(T));
}

int bytes_per_voxel(std::int16_t datatype) {
  switch (static_cast<NiftiDatatype>(datatype)) {
    case NiftiDatatype::uint8: return 1;
    case NiftiDatatype::int16: return 2;
    case NiftiDatatype::float32: return 4;
    case NiftiDatatype::float64: return 8;
  }
  throw UnsupportedFormatError("unsupported NIfTI datatype code " + std::to_string(datatype) +
                               " (supported: 2 uint8, 4 int16, 16 float32, 64 float64)");
}

NiftiHeader parse_header(const std::string& bytes, const fs::path& path) {
  if (bytes.size() < static_cast<std::size_t>(kNiftiHeaderSize))
    throw CorruptFileError("file shorter than a NIfTI-1 header: " + path.string());
  const std::string magic(bytes.data() + kOffMagic, 3);
  if ((magic != "n+1" && magic != "ni1") || bytes[kOffMagic + 3] != '\0')
    throw UnsupportedFormatError("not a NIfTI-1 file (bad magic): " + path.string());

  NiftiHeader h;
  h.magic = magic;
  const auto size_le = load<std::int32_t>(bytes, kOffSizeofHdr, false);
  if (size_le == kNiftiHeaderSize) {
    h.byte_swapped = false;
  } else if (load<std::int32_t>(bytes, kOffSizeofHdr, true) == kNiftiHeaderSize) {
    h.byte_swapped = true;
  } else {
    throw UnsupportedFormatError("sizeof_hdr is not 348: " + path.string());
  }
  const bool sw = h.byte_swapped;
  for (int i = 0; i < 8; ++i) h.dim[i] = load<std::int16_t>(bytes, kOffDim + 2 * i, sw);
  h.datatype = load<std::int16_t>(bytes, kOffDatatype, sw);
  h.bitpix = load<std::int16_t>(bytes, kOffBitpix, sw);
  for (int i = 0; i < 8; ++i) h.pixdim[i] = load<float>(bytes, kOffPixdim + 4 * i, sw);
  h.vox_offset = load<float>(bytes, kOffVoxOffset, sw);
  h.scl_slope = load<float>(bytes, kOffSclSlope, sw);
  h.scl_inter = load<float>(bytes, kOffSclInter, sw);
  return h;
}

}  // namespace

NiftiHeader read_nifti_header(const fs::path& path) { return parse_header(slurp(path), path); }

NiftiVolume read_nifti(const fs::path& path) {
  const std::string bytes = slurp(path);
  NiftiVolume vol;
  vol.header = parse_header(bytes, path);
  const auto& h = vol.header;

  const int ndim = h.dim[0];
  if (ndim < 1 || ndim > 7) throw CorruptFileError("invalid dim[0]=" + std::to_string(ndim) + " in " + path.string());
  for (int i = 1; i <= ndim; ++i)
    if (h.dim[i] < 1) throw CorruptFileError("non-positive dim[" + std::to_string(i) + "] in " + path.string());
  for (int i = 4; i <= ndim; ++i)
    if (h.dim[i] != 1) throw UnsupportedFormatError("only 3D volumes are supported: " + path.string());
  for (int i = 0; i < 3; ++i) vol.shape[i] = i + 1 <= ndim ? h.dim[i + 1] : 1;

  const int bpv = bytes_per_voxel(h.datatype);
  const std::size_t count = static_cast<std::size_t>(vol.shape[0]) * vol.shape[1] * vol.shape[2];

  std::string payload_store;
  const std::string* payload = &bytes;
  std::size_t offset = static_cast<std::size_t>(h.vox_offset);
  if (h.magic == "ni1") {
    // Header/image pair: voxels live in the sibling `.img`.
    fs::path img = path;
    img.replace_extension(".img");
    payload_store = slurp(img);
    payload = &payload_store;
  } else if (offset < static_cast<std::size_t>(kNiftiHeaderSize)) {
    throw CorruptFileError("vox_offset inside the header: " + path.string());
  }
  if (payload->size() < offset + count * bpv)
    throw CorruptFileError("truncated NIfTI payload in " + path.string() + ": need " +
                           std::to_string(offset + count * bpv) + " bytes, have " +
                           std::to_string(payload->size()));

  vol.voxels.resize(count);
  const bool sw = h.byte_swapped;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = offset + i * bpv;
    double v = 0;
    switch (static_cast<NiftiDatatype>(h.datatype)) {
      case NiftiDatatype::uint8: v = static_cast<unsigned char>((*payload)[at]); break;
      case NiftiDatatype::int16: v = load<std::int16_t>(*payload, at, sw); break;
      case NiftiDatatype::float32: v = load<float>(*payload, at, sw); break;
      case NiftiDatatype::float64: v = load<double>(*payload, at, sw); break;
    }
    vol.voxels[i] = v;
  }
  if (h.scl_slope != 0.0f && std::isfinite(h.scl_slope)) {
    const double slope = h.scl_slope, inter = std::isfinite(h.scl_inter) ? h.scl_inter : 0.0;
    for (auto& v : vol.voxels) v = slope * v + inter;
  }
  return vol;
}

void write_nifti(const fs::path& path, const std::array<int, 3>& shape, const std::vector<double>& voxels,
                 NiftiDatatype datatype) {
  const std::size_t count = static_cast<std::size_t>(shape[0]) * shape[1] * shape[2];
  if (voxels.size() != count) throw ContractError("voxel count does not match shape");
  const int bpv = bytes_per_voxel(static_cast<std::int16_t>(datatype));
  constexpr std::size_t kVoxOffset = 352;
  std::string bytes(kVoxOffset + count * bpv, '\0');
  store<std::int32_t>(bytes, kOffSizeofHdr, kNiftiHeaderSize);
  const std::int16_t dims[8] = {3, static_cast<std::int16_t>(shape[0]), static_cast<std::int16_t>(shape[1]),
                                static_cast<std::int16_t>(shape[2]), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) store<std::int16_t>(bytes, kOffDim + 2 * i, dims[i]);
  store<std::int16_t>(bytes, kOffDatatype, static_cast<std::int16_t>(datatype));
  store<std::int16_t>(bytes, kOffBitpix, static_cast<std::int16_t>(8 * bpv));
  for (int i = 0; i < 8; ++i) store<float>(bytes, kOffPixdim + 4 * i, 1.0f);
  store<float>(bytes, kOffVoxOffset, static_cast<float>(kVoxOffset));
  store<float>(bytes, kOffSclSlope, 0.0f);
  store<float>(bytes, kOffSclInter, 0.0f);
  std::memcpy(bytes.data() + kOffMagic, "n+1\0", 4);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = kVoxOffset + i * bpv;
    switch (datatype) {
      case NiftiDatatype::uint8: bytes[at] = static_cast<char>(static_cast<std::uint8_t>(voxels[i])); break;
      case NiftiDatatype::int16: store<std::int16_t>(bytes, at, static_cast<std::int16_t>(voxels[i])); break;
      case NiftiDatatype::float32: store<float>(bytes, at, static_cast<float>(voxels[i])); break;
      case NiftiDatatype::float64: store<double>(bytes, at, voxels[i]); break;
    }
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (path.extension() == ".gz") {
    gzFile gz = gzopen(path.c_str(), "wb");
    if (!gz) throw std::runtime_error("cannot open for writing: " + path.string());
    const int written = gzwrite(gz, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(gz);
    if (written != static_cast<int>(bytes.size())) throw std::runtime_error("gzip write failed: " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace tracseg::data
