#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rootseg/tensor.hpp"

namespace rootseg::ad {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamOptions options;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update of `params` from their accumulated grads.
/// A parameter without a grad is treated as having a zero grad. Moments are
/// allocated on the first call and must keep their shapes afterwards.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state);

}  // namespace rootseg::ad
