#include "rootseg/adam.hpp"

#include <cmath>

#include "rootseg/error.hpp"

namespace rootseg::ad {

template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state) {
  if (state.first_moment.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.value().size(), T(0));
      state.second_moment.emplace_back(p.value().size(), T(0));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw Error(ErrorCode::kShape, "adam: parameter count changed between steps");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].value().size() ||
        state.second_moment[i].size() != params[i].value().size()) {
      throw Error(ErrorCode::kShape, "adam: moment shape mismatch for parameter " + std::to_string(i));
    }
  }

  ++state.step;
  const auto& o = state.options;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  const T b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.has_grad()) {
      // Zero grad: moments decay, the parameter still moves along the old momentum.
      for (auto& m : state.first_moment[i]) m *= b1;
      for (auto& v : state.second_moment[i]) v *= b2;
    } else {
      const auto g = p.grad();
      auto& m = state.first_moment[i];
      auto& v = state.second_moment[i];
      for (std::size_t j = 0; j < g.size(); ++j) {
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      }
    }
    auto value = p.mutable_value();
    const auto& m = state.first_moment[i];
    const auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      value[j] = static_cast<T>(value[j] - o.lr * mhat / (std::sqrt(vhat) + o.eps));
    }
  }
}

template void adam_step(std::span<Tensor<float>>, AdamState<float>&);
template void adam_step(std::span<Tensor<double>>, AdamState<double>&);

}  // namespace rootseg::ad
