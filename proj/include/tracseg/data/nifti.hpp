#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tracseg::data {

/// NIfTI-1 datatype codes this reader understands.
enum class NiftiDatatype : std::int16_t {
  uint8 = 2,
  int16 = 4,
  float32 = 16,
  float64 = 64,
};

inline constexpr int kNiftiHeaderSize = 348;

/// The subset of the 348-byte NIfTI-1 header the toolkit relies on.
struct NiftiHeader {
  std::array<std::int16_t, 8> dim{};
  std::int16_t datatype = 0;
  std::int16_t bitpix = 0;
  std::array<float, 8> pixdim{};
  float vox_offset = 0;
  float scl_slope = 0;
  float scl_inter = 0;
  std::string magic;
  bool byte_swapped = false;
};

/// A 3D voxel array in file order: x varies fastest, then y, then z.
struct NiftiVolume {
  NiftiHeader header;
  std::array<int, 3> shape{1, 1, 1};
  std::vector<double> voxels;

  double at(int x, int y, int z) const {
    return voxels[static_cast<std::size_t>(x) +
                  static_cast<std::size_t>(shape[0]) * (static_cast<std::size_t>(y) +
                                                        static_cast<std::size_t>(shape[1]) * z)];
  }
};

/// Reads a single-file (`.nii`, optionally gzip-compressed) NIfTI-1 volume.
///
/// Throws UnsupportedFormatError on a bad magic or datatype code and
/// CorruptFileError when the payload is shorter than the header promises.
/// Slope/intercept scaling is applied when `scl_slope` is nonzero.
NiftiVolume read_nifti(const std::filesystem::path& path);

/// Header only; the payload is not touched.
NiftiHeader read_nifti_header(const std::filesystem::path& path);

/// Writes a single-file NIfTI-1 volume (gzip-compressed when the name ends in `.gz`).
/// Values are cast to `datatype`; no scaling is recorded.
void write_nifti(const std::filesystem::path& path, const std::array<int, 3>& shape,
                 const std::vector<double>& voxels, NiftiDatatype datatype);

}  // namespace tracseg::data
