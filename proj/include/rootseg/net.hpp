#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rootseg/tensor.hpp"
#include "rootseg/volume.hpp"

namespace rootseg {

/// Width configuration of the super-resolution U-Net. Depth (three encoder
/// levels) and kernel size (3) are fixed.
struct NetConfig {
  std::int64_t base_channels = 16;
  /// Channels of the super-resolution tail; 0 means "same as base_channels".
  std::int64_t sr_tail_channels = 0;

  std::int64_t tail_channels() const { return sr_tail_channels > 0 ? sr_tail_channels : base_channels; }
  void validate() const;
  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

inline constexpr std::int64_t kConvKernel = 3;

struct LayerSize {
  std::string layer;
  std::int64_t size;
};

/// Per-axis spatial sizes through the network for one input size.
struct ShapePlan {
  std::int64_t input_size = 0;
  std::vector<LayerSize> layers;
  std::int64_t output_size = 0;
  /// Input voxels on each side not covered by the output (at 1x).
  std::int64_t input_margin = 0;
};

/// Throws Error(kShape) naming the first layer whose size becomes < 1 or
/// which pools an odd size.
ShapePlan shape_plan(std::int64_t input_size, const NetConfig& cfg = {});
bool is_valid_input_size(std::int64_t input_size);

struct ParamSpec {
  std::string name;
  ad::Shape shape;
  std::int64_t fan_in;
};

/// Parameter table in initialization (and checkpoint) order.
std::vector<ParamSpec> parameter_specs(const NetConfig& cfg);

template <typename T>
class Network {
 public:
  Network(NetConfig cfg, std::vector<ad::Tensor<T>> params);

  const NetConfig& config() const { return cfg_; }
  std::span<ad::Tensor<T>> parameters() { return params_; }
  std::span<const ad::Tensor<T>> parameters() const { return params_; }
  const std::vector<std::string>& names() const { return names_; }
  const ad::Tensor<T>& param(std::string_view name) const;
  std::int64_t parameter_count() const;

  /// (1,D,H,W) input -> (1,2D-84,2H-84,2W-84) probabilities, recording the
  /// graph when grad mode is on.
  ad::Tensor<T> forward(const ad::Tensor<T>& input) const;

  /// Deep copy with fresh parameter tensors, converted to U.
  template <typename U>
  Network<U> cast() const;
  Network clone() const { return cast<T>(); }

  void zero_grad();

 private:
  NetConfig cfg_;
  std::vector<std::string> names_;
  std::vector<ad::Tensor<T>> params_;
};

/// He-normal (fan-in) weights and zero biases, deterministic in seed.
template <typename T = float>
Network<T> build(const NetConfig& cfg, std::uint64_t seed);

/// Inference on a single-channel volume; no graph is recorded.
Volume forward(const Network<float>& net, const Volume& input);

struct TrainingMeta {
  std::int64_t step = 0;
  std::uint64_t seed = 0;
};

struct Checkpoint {
  Network<float> net;
  TrainingMeta meta;
};

std::vector<std::uint8_t> encode_checkpoint(const Network<float>& net, const TrainingMeta& meta);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Network<float>& net, const TrainingMeta& meta, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rootseg
