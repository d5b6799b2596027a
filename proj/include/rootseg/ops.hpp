#pragma once

#include <optional>

#include "rootseg/tensor.hpp"
#include "rootseg/volume.hpp"

namespace rootseg::ad {

// Differentiable layers on (C,D,H,W) tensors. All are instantiated for float
// (training) and double (gradient checks).

/// Valid cross-correlation: input (C,D,H,W), weight (O,C,k,k,k), bias (O)
/// -> (O, D-k+1, H-k+1, W-k+1).
template <typename T>
Tensor<T> conv3d_valid(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

/// 2x2x2 max pooling with stride 2. Ties go to the first voxel in scan order.
template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& input);

/// Kernel-2 stride-2 transposed convolution: input (C,D,H,W), weight
/// (C,O,2,2,2), bias (O) -> (O,2D,2H,2W). Every output voxel has exactly one
/// contributing input voxel.
template <typename T>
Tensor<T> conv_transpose3d_x2(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

/// Center-crops whichever input is spatially larger (per axis) to the other's
/// extent, then concatenates along channels, a first.
template <typename T>
Tensor<T> concat_center_crop(const Tensor<T>& a, const Tensor<T>& b);

/// Spatial crop of a (C,D,H,W) tensor to `extent` starting at `origin`.
template <typename T>
Tensor<T> crop3d(const Tensor<T>& x, const Index3& origin, const Extent3& extent);

/// Elementwise logistic function; results are kept strictly inside (0, 1).
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

/// Elementwise ELU with alpha = 1.
template <typename T>
Tensor<T> elu(const Tensor<T>& x);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

/// Sum_i coeffs[i] * x[i] as a scalar.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, std::span<const T> coeffs);

struct LossConfig {
  double root_weight = 1.0;
  bool use_dontcare = false;
  double clamp_epsilon = 1e-7;

  void validate() const;
};

/// Binary cross-entropy averaged over cared-for voxels, with root voxels
/// weighted by cfg.root_weight:
///   L = -sum_{i not dc} w_i [y_i log p_i + (1-y_i) log(1-p_i)] / N_cared
/// `pred` holds probabilities with the same element count and spatial layout
/// as the target; `dontcare` is only consulted when cfg.use_dontcare is set.
template <typename T>
Tensor<T> weighted_masked_bce(const Tensor<T>& pred, const Volume& target, const Volume* dontcare,
                              const LossConfig& cfg);

/// Conversions between single-channel Volumes and (C,D,H,W) tensors.
template <typename T>
Tensor<T> tensor_from_volume(const Volume& v);
template <typename T>
Volume volume_from_tensor(const Tensor<T>& t);

}  // namespace rootseg::ad
