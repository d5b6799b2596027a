#include "rootseg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <system_error>

#include "rootseg/error.hpp"

namespace rootseg {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kDimOverflow: return "dim overflow";
    case ErrorCode::kUnknownDtype: return "unknown dtype";
    case ErrorCode::kTrailingBytes: return "trailing bytes";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

Axis parse_axis(std::string_view name) {
  if (name == "d" || name == "z") return Axis::kD;
  if (name == "h" || name == "y") return Axis::kH;
  if (name == "w" || name == "x") return Axis::kW;
  throw Error(ErrorCode::kInvalidArgument, "unknown axis '" + std::string(name) + "'");
}

namespace {

void check_dims(const VolumeDims& dims) {
  if (dims.c < 1 || dims.d < 1 || dims.h < 1 || dims.w < 1) {
    throw Error(ErrorCode::kShape, "volume dims must all be >= 1");
  }
}

template <typename T>
void check_length(const VolumeDims& dims, const std::vector<T>& data) {
  check_dims(dims);
  if (static_cast<std::int64_t>(data.size()) != dims.size()) {
    throw Error(ErrorCode::kShape, "volume data length " + std::to_string(data.size()) +
                                       " does not match dims (" + std::to_string(dims.size()) + ")");
  }
}

constexpr std::array<std::uint8_t, 6> kRvolMagic = {'R', 'V', 'O', 'L', '1', '\0'};
constexpr std::size_t kRvolHeaderSize = 6 + 1 + 1 + 4 * 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

Volume::Volume(VolumeDims dims, DType dtype) : dims_(dims), dtype_(dtype) {
  check_dims(dims);
  if (dtype == DType::kU8) {
    data_ = std::vector<std::uint8_t>(static_cast<std::size_t>(dims.size()), 0);
  } else {
    data_ = std::vector<float>(static_cast<std::size_t>(dims.size()), 0.0f);
  }
}

Volume::Volume(VolumeDims dims, std::vector<float> data)
    : dims_(dims), dtype_(DType::kF32) {
  check_length(dims, data);
  data_ = std::move(data);
}

Volume::Volume(VolumeDims dims, std::vector<std::uint8_t> data)
    : dims_(dims), dtype_(DType::kU8) {
  check_length(dims, data);
  data_ = std::move(data);
}

std::span<const float> Volume::f32() const {
  if (dtype_ != DType::kF32) throw Error(ErrorCode::kInvalidArgument, "volume is not f32");
  return std::get<std::vector<float>>(data_);
}

std::span<float> Volume::f32() {
  if (dtype_ != DType::kF32) throw Error(ErrorCode::kInvalidArgument, "volume is not f32");
  return std::get<std::vector<float>>(data_);
}

std::span<const std::uint8_t> Volume::u8() const {
  if (dtype_ != DType::kU8) throw Error(ErrorCode::kInvalidArgument, "volume is not u8");
  return std::get<std::vector<std::uint8_t>>(data_);
}

std::span<std::uint8_t> Volume::u8() {
  if (dtype_ != DType::kU8) throw Error(ErrorCode::kInvalidArgument, "volume is not u8");
  return std::get<std::vector<std::uint8_t>>(data_);
}

double Volume::value(std::int64_t flat) const {
  if (dtype_ == DType::kU8) return std::get<std::vector<std::uint8_t>>(data_)[flat];
  return std::get<std::vector<float>>(data_)[flat];
}

Volume Volume::to_f32() const {
  if (dtype_ == DType::kF32) return *this;
  const auto& src = std::get<std::vector<std::uint8_t>>(data_);
  return Volume(dims_, std::vector<float>(src.begin(), src.end()));
}

bool operator==(const Volume& a, const Volume& b) {
  if (a.dims_ != b.dims_ || a.dtype_ != b.dtype_) return false;
  if (a.dtype_ == DType::kU8) return a.data_ == b.data_;
  // Bitwise comparison so NaN payloads and signed zeros count.
  const auto& x = std::get<std::vector<float>>(a.data_);
  const auto& y = std::get<std::vector<float>>(b.data_);
  return std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) == 0;
}

std::vector<std::uint8_t> encode_rvol(const Volume& v) {
  const auto& dims = v.dims();
  const std::size_t elem = v.dtype() == DType::kU8 ? 1 : 4;
  std::vector<std::uint8_t> out(kRvolMagic.begin(), kRvolMagic.end());
  out.reserve(kRvolHeaderSize + elem * static_cast<std::size_t>(v.size()));
  out.push_back(static_cast<std::uint8_t>(v.dtype()));
  out.push_back(4);
  for (std::int64_t d : {dims.c, dims.d, dims.h, dims.w}) {
    if (d > std::numeric_limits<std::uint32_t>::max()) {
      throw Error(ErrorCode::kDimOverflow, "rvol: dim overflow (dimension exceeds u32)");
    }
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  if (v.dtype() == DType::kU8) {
    auto data = v.u8();
    out.insert(out.end(), data.begin(), data.end());
  } else {
    for (float f : v.f32()) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(out, bits);
    }
  }
  return out;
}

Volume decode_rvol(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kRvolMagic.size() ||
      !std::equal(kRvolMagic.begin(), kRvolMagic.end(), bytes.begin())) {
    throw Error(ErrorCode::kBadMagic, "rvol: bad magic");
  }
  if (bytes.size() < kRvolHeaderSize) {
    throw Error(ErrorCode::kTruncated, "rvol: truncated header");
  }
  const std::uint8_t dtype_code = bytes[6];
  if (dtype_code > 1) {
    throw Error(ErrorCode::kUnknownDtype,
                "rvol: unknown dtype code " + std::to_string(dtype_code));
  }
  if (bytes[7] != 4) {
    throw Error(ErrorCode::kShape, "rvol: ndim must be 4, got " + std::to_string(bytes[7]));
  }
  const char* names[4] = {"C", "D", "H", "W"};
  std::uint64_t count = 1;
  std::int64_t dim[4];
  for (int i = 0; i < 4; ++i) {
    dim[i] = get_u32(bytes.data() + 8 + 4 * i);
    if (dim[i] == 0) {
      throw Error(ErrorCode::kShape, std::string("rvol: dim ") + names[i] + " is zero");
    }
    if (count > (std::uint64_t{1} << 40) / static_cast<std::uint64_t>(dim[i])) {
      throw Error(ErrorCode::kDimOverflow,
                  std::string("rvol: dim overflow at dim ") + names[i]);
    }
    count *= static_cast<std::uint64_t>(dim[i]);
  }
  const auto dtype = static_cast<DType>(dtype_code);
  const std::uint64_t payload = count * (dtype == DType::kU8 ? 1 : 4);
  const std::uint64_t available = bytes.size() - kRvolHeaderSize;
  if (available < payload) throw Error(ErrorCode::kTruncated, "rvol: truncated payload");
  if (available > payload) throw Error(ErrorCode::kTrailingBytes, "rvol: trailing bytes after payload");

  const VolumeDims dims{dim[0], dim[1], dim[2], dim[3]};
  const std::uint8_t* p = bytes.data() + kRvolHeaderSize;
  if (dtype == DType::kU8) return Volume(dims, std::vector<std::uint8_t>(p, p + count));
  std::vector<float> data(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t bits = get_u32(p + 4 * i);
    std::memcpy(&data[i], &bits, 4);
  }
  return Volume(dims, std::move(data));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kIo, "read failed for '" + path.string() + "'");
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::kIo, "cannot rename into '" + path.string() + "'");
  }
}

Volume read_rvol(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_rvol(bytes);
}

void write_rvol(const Volume& v, const std::filesystem::path& path) {
  write_file_atomic(path, encode_rvol(v));
}

Volume crop(const Volume& v, const VoxelBox& box) {
  const auto& dims = v.dims();
  const Extent3 full = dims.spatial();
  for (int a = 0; a < 3; ++a) {
    if (box.origin[a] < 0 || box.extent[a] < 1 || box.origin[a] + box.extent[a] > full[a]) {
      throw Error(ErrorCode::kShape, "crop box exceeds volume on axis " + std::to_string(a));
    }
  }
  const VolumeDims out_dims{dims.c, box.extent.d, box.extent.h, box.extent.w};
  Volume out(out_dims, v.dtype());
  auto copy = [&](auto src, auto dst) {
    std::int64_t k = 0;
    for (std::int64_t c = 0; c < dims.c; ++c)
      for (std::int64_t d = 0; d < box.extent.d; ++d)
        for (std::int64_t h = 0; h < box.extent.h; ++h) {
          const auto row = src.begin() + v.index(c, box.origin.d + d, box.origin.h + h, box.origin.w);
          std::copy(row, row + box.extent.w, dst.begin() + k);
          k += box.extent.w;
        }
  };
  if (v.dtype() == DType::kU8) {
    copy(v.u8(), out.u8());
  } else {
    copy(v.f32(), out.f32());
  }
  return out;
}

Index3 center_crop_origin(const Extent3& dims, const Extent3& extent) {
  Index3 origin;
  for (int a = 0; a < 3; ++a) {
    const std::int64_t margin = dims[a] - extent[a];
    if (extent[a] < 1 || margin < 0) {
      throw Error(ErrorCode::kShape, "center crop: extent too large on axis " + std::to_string(a));
    }
    if (margin % 2 != 0) {
      throw Error(ErrorCode::kShape, "center crop: odd margin on axis " + std::to_string(a));
    }
    origin[a] = margin / 2;
  }
  return origin;
}

Volume center_crop(const Volume& v, const Extent3& extent) {
  return crop(v, {center_crop_origin(v.dims().spatial(), extent), extent});
}

GrayImage slice_image(const Volume& v, Axis axis, std::int64_t index, const SliceNormalization& norm) {
  const auto& dims = v.dims();
  if (dims.c != 1) throw Error(ErrorCode::kShape, "slice export needs a single-channel volume");
  const int a = static_cast<int>(axis);
  const Extent3 sp = dims.spatial();
  if (index < 0 || index >= sp[a]) {
    throw Error(ErrorCode::kInvalidArgument, "slice index " + std::to_string(index) + " out of range");
  }

  double lo = norm.lo, hi = norm.hi;
  if (norm.mode == SliceNormalization::Mode::kMinMax) {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (std::int64_t i = 0; i < v.size(); ++i) {
      lo = std::min(lo, v.value(i));
      hi = std::max(hi, v.value(i));
    }
  }

  GrayImage img;
  img.rows = a == 0 ? sp.h : sp.d;
  img.cols = a == 2 ? sp.h : sp.w;
  img.pixels.resize(static_cast<std::size_t>(img.rows * img.cols));
  for (std::int64_t r = 0; r < img.rows; ++r) {
    for (std::int64_t c = 0; c < img.cols; ++c) {
      std::int64_t d = 0, h = 0, w = 0;
      switch (axis) {
        case Axis::kD: d = index, h = r, w = c; break;
        case Axis::kH: d = r, h = index, w = c; break;
        case Axis::kW: d = r, h = c, w = index; break;
      }
      double px = 0.0;
      if (hi > lo) {
        const double x = std::clamp(v.value(v.index(0, d, h, w)), lo, hi);
        px = std::floor((x - lo) * 255.0 / (hi - lo));
      }
      img.pixels[static_cast<std::size_t>(r * img.cols + c)] = static_cast<std::uint8_t>(px);
    }
  }
  return img;
}

void export_slice(const Volume& v, Axis axis, std::int64_t index, const std::filesystem::path& path,
                  const SliceNormalization& norm) {
  const GrayImage img = slice_image(v, axis, index, norm);
  const std::string header =
      "P5\n" + std::to_string(img.cols) + " " + std::to_string(img.rows) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), img.pixels.begin(), img.pixels.end());
  write_file_atomic(path, bytes);
}

}  // namespace rootseg
