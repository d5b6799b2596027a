#include "rootseg/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <json.hpp>

#include "rootseg/error.hpp"
#include "rootseg/ops.hpp"
#include "rootseg/rng.hpp"

namespace rootseg {

using ad::Tensor;

void NetConfig::validate() const {
  if (base_channels < 1) throw Error(ErrorCode::kConfig, "net: base_channels must be >= 1");
  if (sr_tail_channels < 0) throw Error(ErrorCode::kConfig, "net: sr_tail_channels must be >= 0");
}

namespace {

class PlanBuilder {
 public:
  explicit PlanBuilder(std::int64_t s) { plan_.input_size = s; }

  std::int64_t conv(const std::string& layer, std::int64_t size) {
    return record(layer, size - (kConvKernel - 1));
  }

  std::int64_t pool(const std::string& layer, std::int64_t size) {
    if (size % 2 != 0) {
      throw Error(ErrorCode::kShape, "shape plan: input size " + std::to_string(plan_.input_size) + " fails at " +
                                         layer + " (pooling odd size " + std::to_string(size) + ")");
    }
    return record(layer, size / 2);
  }

  std::int64_t up(const std::string& layer, std::int64_t size) { return record(layer, 2 * size); }

  std::int64_t record(const std::string& layer, std::int64_t size) {
    if (size < 1) {
      throw Error(ErrorCode::kShape, "shape plan: input size " + std::to_string(plan_.input_size) + " fails at " +
                                         layer + " (size " + std::to_string(size) + ")");
    }
    plan_.layers.push_back({layer, size});
    return size;
  }

  ShapePlan finish(std::int64_t out) {
    plan_.output_size = out;
    // The output covers out/2 input voxels, centered.
    plan_.input_margin = (plan_.input_size - out / 2) / 2;
    return std::move(plan_);
  }

 private:
  ShapePlan plan_;
};

}  // namespace

ShapePlan shape_plan(std::int64_t s, const NetConfig& cfg) {
  cfg.validate();
  PlanBuilder b(s);
  if (s < 1) b.record("input", s);
  std::int64_t x = b.conv("enc1.conv1", s);
  const std::int64_t e1 = b.conv("enc1.conv2", x);
  x = b.pool("enc1.pool", e1);
  x = b.conv("enc2.conv1", x);
  const std::int64_t e2 = b.conv("enc2.conv2", x);
  x = b.pool("enc2.pool", e2);
  x = b.conv("enc3.conv1", x);
  x = b.conv("enc3.conv2", x);
  x = b.up("dec2.up", x);
  x = b.conv("dec2.conv1", x);
  x = b.conv("dec2.conv2", x);
  x = b.up("dec1.up", x);
  x = b.conv("dec1.conv1", x);
  x = b.conv("dec1.conv2", x);
  x = b.up("sr.up", x);
  x = b.conv("sr.conv1", x);
  x = b.conv("sr.conv2", x);
  // Every skip source is larger than its consumer by an even margin: the
  // up-sampled maps are even and the encoder maps before pooling are even.
  (void)e1;
  (void)e2;
  return b.finish(x);
}

bool is_valid_input_size(std::int64_t s) {
  try {
    shape_plan(s);
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::vector<ParamSpec> parameter_specs(const NetConfig& cfg) {
  cfg.validate();
  const std::int64_t c = cfg.base_channels, t = cfg.tail_channels(), k = kConvKernel;
  std::vector<ParamSpec> specs;
  auto conv = [&](const std::string& name, std::int64_t in, std::int64_t out, std::int64_t ks) {
    specs.push_back({name + ".weight", {out, in, ks, ks, ks}, in * ks * ks * ks});
    specs.push_back({name + ".bias", {out}, in * ks * ks * ks});
  };
  auto up = [&](const std::string& name, std::int64_t in, std::int64_t out) {
    specs.push_back({name + ".weight", {in, out, 2, 2, 2}, in});
    specs.push_back({name + ".bias", {out}, in});
  };
  conv("enc1.conv1", 1, c, k);
  conv("enc1.conv2", c, c, k);
  conv("enc2.conv1", c, 2 * c, k);
  conv("enc2.conv2", 2 * c, 2 * c, k);
  conv("enc3.conv1", 2 * c, 4 * c, k);
  conv("enc3.conv2", 4 * c, 4 * c, k);
  up("dec2.up", 4 * c, 2 * c);
  conv("dec2.conv1", 4 * c, 2 * c, k);
  conv("dec2.conv2", 2 * c, 2 * c, k);
  up("dec1.up", 2 * c, c);
  conv("dec1.conv1", 2 * c, c, k);
  conv("dec1.conv2", c, c, k);
  up("sr.up", c, t);
  up("sr.input_up", 1, t);
  conv("sr.conv1", 2 * t, t, k);
  conv("sr.conv2", t, t, k);
  conv("head", t, 1, 1);
  return specs;
}

template <typename T>
Network<T>::Network(NetConfig cfg, std::vector<Tensor<T>> params) : cfg_(cfg), params_(std::move(params)) {
  const auto specs = parameter_specs(cfg_);
  if (specs.size() != params_.size()) {
    throw Error(ErrorCode::kShape, "network: expected " + std::to_string(specs.size()) + " parameters, got " +
                                       std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (params_[i].shape() != specs[i].shape) throw Error(ErrorCode::kShape, "shape mismatch " + specs[i].name);
    names_.push_back(specs[i].name);
  }
}

template <typename T>
const Tensor<T>& Network<T>::param(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return params_[i];
  }
  throw Error(ErrorCode::kInvalidArgument, "network: no parameter named " + std::string(name));
}

template <typename T>
std::int64_t Network<T>::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const {
  std::vector<Tensor<U>> out;
  for (const auto& p : params_) {
    out.push_back(Tensor<U>::parameter(p.shape(), std::vector<U>(p.value().begin(), p.value().end())));
  }
  return Network<U>(cfg_, std::move(out));
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& input) const {
  if (input.shape().size() != 4 || input.dim(0) != 1) {
    throw Error(ErrorCode::kShape, "network input must be (1,D,H,W), got " + ad::shape_string(input.shape()));
  }
  for (int a = 1; a <= 3; ++a) shape_plan(input.dim(a), cfg_);

  auto conv = [&](const std::string& name, const Tensor<T>& x) {
    return ad::conv3d_valid(x, param(name + ".weight"), param(name + ".bias"));
  };
  auto block = [&](const std::string& name, const Tensor<T>& x) {
    return ad::elu(conv(name + ".conv2", ad::elu(conv(name + ".conv1", x))));
  };
  auto up = [&](const std::string& name, const Tensor<T>& x) {
    return ad::conv_transpose3d_x2(x, param(name + ".weight"), param(name + ".bias"));
  };

  const Tensor<T> e1 = block("enc1", input);
  const Tensor<T> e2 = block("enc2", ad::maxpool3d(e1));
  const Tensor<T> e3 = block("enc3", ad::maxpool3d(e2));
  const Tensor<T> d2 = block("dec2", ad::concat_center_crop(up("dec2.up", e3), e2));
  const Tensor<T> d1 = block("dec1", ad::concat_center_crop(up("dec1.up", d2), e1));
  // Only the center of the up-sampled input survives the crop-concat, and
  // each up-sampled voxel depends on one input voxel, so crop first.
  const Tensor<T> sr_up = up("sr.up", d1);
  Index3 origin;
  Extent3 extent;
  for (int a = 0; a < 3; ++a) {
    const std::int64_t margin = (2 * input.dim(a + 1) - sr_up.dim(a + 1)) / 2;
    origin[a] = margin / 2;
    extent[a] = input.dim(a + 1) - 2 * origin[a];
  }
  const Tensor<T> input_up = up("sr.input_up", ad::crop3d(input, origin, extent));
  const Tensor<T> sr = block("sr", ad::concat_center_crop(sr_up, input_up));
  return ad::sigmoid(conv("head", sr));
}

template <typename T>
Network<T> build(const NetConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor<T>> params;
  for (const auto& spec : parameter_specs(cfg)) {
    std::vector<T> values(static_cast<std::size_t>(ad::numel(spec.shape)), T(0));
    if (spec.shape.size() > 1) {
      const double stddev = std::sqrt(2.0 / static_cast<double>(spec.fan_in));
      for (auto& v : values) v = static_cast<T>(rng.normal(0.0, stddev));
    }
    params.push_back(Tensor<T>::parameter(spec.shape, std::move(values)));
  }
  return Network<T>(cfg, std::move(params));
}

Volume forward(const Network<float>& net, const Volume& input) {
  if (input.dims().c != 1) throw Error(ErrorCode::kShape, "network input volume must have one channel");
  ad::NoGradGuard no_grad;
  const auto out = net.forward(ad::tensor_from_volume<float>(input));
  return ad::volume_from_tensor(out);
}

// ---- checkpoint -----------------------------------------------------------

namespace {

constexpr std::array<std::uint8_t, 6> kNetMagic = {'R', 'N', 'E', 'T', '1', '\0'};

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  std::uint64_t le(int n, const char* what) {
    need(n, what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (pos_ + n > end_) throw Error(ErrorCode::kTruncated, std::string("checkpoint: truncated ") + what);
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

// The JSON trailer is found from the end of the file: its u32 length prefix
// equals the number of bytes that follow it. JSON text never holds a zero
// byte, so the prefix (whose high byte is zero) cannot be matched inside it.
std::size_t find_trailer(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kNetMagic.size() + 4 + 4) throw Error(ErrorCode::kTruncated, "checkpoint: truncated file");
  for (std::size_t p = bytes.size() - 5 + 1; p-- > kNetMagic.size() + 4;) {
    const std::uint64_t len = static_cast<std::uint64_t>(bytes[p]) | (std::uint64_t(bytes[p + 1]) << 8) |
                              (std::uint64_t(bytes[p + 2]) << 16) | (std::uint64_t(bytes[p + 3]) << 24);
    if (len == bytes.size() - p - 4 && bytes[p + 4] == '{') return p;
  }
  throw Error(ErrorCode::kTruncated, "checkpoint: missing metadata trailer");
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Network<float>& net, const TrainingMeta& meta) {
  std::vector<std::uint8_t> out(kNetMagic.begin(), kNetMagic.end());
  const auto params = net.parameters();
  put_le(out, params.size(), 4);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = net.names()[i];
    put_le(out, name.size(), 2);
    out.insert(out.end(), name.begin(), name.end());
    put_le(out, params[i].shape().size(), 1);
    for (auto d : params[i].shape()) put_le(out, static_cast<std::uint64_t>(d), 4);
    for (float f : params[i].value()) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_le(out, bits, 4);
    }
  }
  nlohmann::json j;
  j["net"] = {{"base_channels", net.config().base_channels},
              {"sr_tail_channels", net.config().sr_tail_channels}};
  j["meta"] = {{"step", meta.step}, {"seed", meta.seed}};
  const std::string blob = j.dump();
  put_le(out, blob.size(), 4);
  out.insert(out.end(), blob.begin(), blob.end());
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kNetMagic.size() || !std::equal(kNetMagic.begin(), kNetMagic.end(), bytes.begin())) {
    throw Error(ErrorCode::kBadMagic, "checkpoint: bad magic");
  }
  const std::size_t trailer = find_trailer(bytes);
  NetConfig cfg;
  TrainingMeta meta;
  try {
    const auto j = nlohmann::json::parse(bytes.begin() + trailer + 4, bytes.end());
    cfg.base_channels = j.at("net").at("base_channels").get<std::int64_t>();
    cfg.sr_tail_channels = j.at("net").at("sr_tail_channels").get<std::int64_t>();
    meta.step = j.at("meta").at("step").get<std::int64_t>();
    meta.seed = j.at("meta").at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("checkpoint: bad metadata: ") + e.what());
  }
  const auto specs = parameter_specs(cfg);

  Reader r(bytes, trailer);
  r.take(kNetMagic.size(), "magic");
  const auto count = r.le(4, "parameter count");
  if (count != specs.size()) {
    throw Error(ErrorCode::kShape, "checkpoint: parameter count " + std::to_string(count) + " does not match " +
                                       std::to_string(specs.size()) + " expected by its configuration");
  }
  std::vector<Tensor<float>> params;
  for (const auto& spec : specs) {
    const auto name_len = r.le(2, "name length");
    const auto name_bytes = r.take(name_len, "name");
    const std::string name(name_bytes.begin(), name_bytes.end());
    if (name != spec.name) throw Error(ErrorCode::kShape, "checkpoint: unexpected parameter " + name);
    const auto ndim = r.le(1, "ndim");
    ad::Shape shape;
    for (std::uint64_t i = 0; i < ndim; ++i) shape.push_back(static_cast<std::int64_t>(r.le(4, "dims")));
    if (shape != spec.shape) throw Error(ErrorCode::kShape, "shape mismatch " + name);
    const auto payload = r.take(static_cast<std::size_t>(ad::numel(shape)) * 4, "payload");
    std::vector<float> values(payload.size() / 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const std::uint32_t bits = static_cast<std::uint32_t>(payload[4 * i]) |
                                 (std::uint32_t(payload[4 * i + 1]) << 8) |
                                 (std::uint32_t(payload[4 * i + 2]) << 16) | (std::uint32_t(payload[4 * i + 3]) << 24);
      std::memcpy(&values[i], &bits, 4);
    }
    params.push_back(Tensor<float>::parameter(shape, std::move(values)));
  }
  if (r.pos() != trailer) throw Error(ErrorCode::kTrailingBytes, "checkpoint: unexpected bytes before metadata");
  return {Network<float>(cfg, std::move(params)), meta};
}

void save_checkpoint(const Network<float>& net, const TrainingMeta& meta, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(net, meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

template class Network<float>;
template class Network<double>;
template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template Network<float> build<float>(const NetConfig&, std::uint64_t);
template Network<double> build<double>(const NetConfig&, std::uint64_t);

}  // namespace rootseg
