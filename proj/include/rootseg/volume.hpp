#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace rootseg {

enum class DType : std::uint8_t { kU8 = 0, kF32 = 1 };

/// Spatial axis of a (C,D,H,W) grid. z/y/x are accepted aliases for d/h/w.
enum class Axis { kD = 0, kH = 1, kW = 2 };

Axis parse_axis(std::string_view name);

/// Per-axis spatial extent (depth, height, width).
struct Extent3 {
  std::int64_t d = 1, h = 1, w = 1;

  std::int64_t volume() const { return d * h * w; }
  std::int64_t operator[](int axis) const { return axis == 0 ? d : axis == 1 ? h : w; }
  std::int64_t& operator[](int axis) { return axis == 0 ? d : axis == 1 ? h : w; }
  friend bool operator==(const Extent3&, const Extent3&) = default;

  static Extent3 cube(std::int64_t s) { return {s, s, s}; }
};

using Index3 = Extent3;

/// Axis-aligned box inside a grid: origin (>= 0) plus extent (>= 1).
struct VoxelBox {
  Index3 origin{0, 0, 0};
  Extent3 extent;
  friend bool operator==(const VoxelBox&, const VoxelBox&) = default;
};

struct VolumeDims {
  std::int64_t c = 1, d = 1, h = 1, w = 1;

  std::int64_t spatial_size() const { return d * h * w; }
  std::int64_t size() const { return c * d * h * w; }
  Extent3 spatial() const { return {d, h, w}; }
  friend bool operator==(const VolumeDims&, const VolumeDims&) = default;
};

/// Dense (C,D,H,W) grid in row-major order, holding either u8 or f32 voxels.
/// Binary masks are u8 volumes with values in {0, 1}.
class Volume {
 public:
  Volume() : Volume(VolumeDims{}, DType::kF32) {}
  Volume(VolumeDims dims, DType dtype);
  Volume(VolumeDims dims, std::vector<float> data);
  Volume(VolumeDims dims, std::vector<std::uint8_t> data);

  static Volume zeros_f32(VolumeDims dims) { return Volume(dims, DType::kF32); }
  static Volume zeros_u8(VolumeDims dims) { return Volume(dims, DType::kU8); }

  const VolumeDims& dims() const { return dims_; }
  DType dtype() const { return dtype_; }
  std::int64_t size() const { return dims_.size(); }

  std::span<const float> f32() const;
  std::span<float> f32();
  std::span<const std::uint8_t> u8() const;
  std::span<std::uint8_t> u8();

  std::int64_t index(std::int64_t c, std::int64_t d, std::int64_t h, std::int64_t w) const {
    return ((c * dims_.d + d) * dims_.h + h) * dims_.w + w;
  }

  /// Voxel value converted to double regardless of dtype.
  double value(std::int64_t flat) const;

  /// Copy with values converted to f32 (u8 values keep their integer value).
  Volume to_f32() const;

  friend bool operator==(const Volume& a, const Volume& b);

 private:
  VolumeDims dims_;
  DType dtype_;
  std::variant<std::vector<std::uint8_t>, std::vector<float>> data_;
};

/// Serializes to the RVOL1 container: little-endian header + raw payload.
std::vector<std::uint8_t> encode_rvol(const Volume& v);
Volume decode_rvol(std::span<const std::uint8_t> bytes);

Volume read_rvol(const std::filesystem::path& path);
void write_rvol(const Volume& v, const std::filesystem::path& path);

/// Box crop over all channels. Throws if the box leaves the grid.
Volume crop(const Volume& v, const VoxelBox& box);

/// Centered crop; the margin dims - extent must be even on every axis.
Volume center_crop(const Volume& v, const Extent3& extent);

/// Origin of a centered crop (validates like center_crop).
Index3 center_crop_origin(const Extent3& dims, const Extent3& extent);

struct SliceNormalization {
  enum class Mode { kMinMax, kFixed };
  Mode mode = Mode::kMinMax;
  double lo = 0.0;
  double hi = 1.0;

  static SliceNormalization minmax() { return {}; }
  static SliceNormalization fixed(double lo, double hi) { return {Mode::kFixed, lo, hi}; }
};

/// Grayscale 8-bit image, row-major.
struct GrayImage {
  std::int64_t rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;
};

/// Extracts one slice of a single-channel volume as an 8-bit image. The
/// normalization range is taken over the whole volume.
GrayImage slice_image(const Volume& v, Axis axis, std::int64_t index,
                      const SliceNormalization& norm);

/// Writes slice_image(...) as a binary PGM (P5).
void export_slice(const Volume& v, Axis axis, std::int64_t index,
                  const std::filesystem::path& path, const SliceNormalization& norm);

/// Writes bytes to path via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace rootseg
