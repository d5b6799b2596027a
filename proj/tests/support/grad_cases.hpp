#pragma once

// Random small graphs, one per differentiable op, for finite-difference checks.
// Every case reduces its op output to a scalar with a random linear functional
// so each output entry contributes to the gradient.

#include <memory>
#include <string>
#include <vector>

#include "support/oracles.hpp"

namespace rootseg::testing {

struct GradCase {
  std::string op;
  std::function<Tensor<double>()> f;
  std::vector<Tensor<double>> inputs;
};

inline const std::vector<std::string>& grad_case_ops() {
  static const std::vector<std::string> ops = {
      "conv3d_valid", "maxpool3d", "conv_transpose3d_x2", "concat_center_crop", "crop3d",
      "sigmoid",      "elu",       "scale",               "weighted_sum",       "weighted_masked_bce"};
  return ops;
}

namespace detail {

inline std::int64_t between(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

/// Wraps op(inputs...) into sum_i c_i * out_i with c ~ U[-1,1].
inline std::function<Tensor<double>()> reduce(std::function<Tensor<double>()> op, Rng& rng) {
  const Tensor<double> probe = op();
  auto coeffs = std::make_shared<std::vector<double>>(random_values(probe.numel(), rng));
  return [op, coeffs] { return ad::weighted_sum<double>(op(), *coeffs); };
}

}  // namespace detail

/// All spatial extents stay within 6 per axis.
inline GradCase make_grad_case(const std::string& op, Rng& rng) {
  using detail::between;
  GradCase g;
  g.op = op;
  auto shape4 = [&](std::int64_t c, std::int64_t lo, std::int64_t hi) {
    return Shape{c, between(rng, lo, hi), between(rng, lo, hi), between(rng, lo, hi)};
  };
  if (op == "conv3d_valid") {
    const std::int64_t C = between(rng, 1, 3), O = between(rng, 1, 3);
    auto x = random_param(shape4(C, 3, 6), rng);
    auto w = random_param({O, C, 3, 3, 3}, rng);
    auto b = random_param({O}, rng);
    g.inputs = {x, w, b};
    g.f = detail::reduce([=] { return ad::conv3d_valid(x, w, b); }, rng);
  } else if (op == "maxpool3d") {
    const std::int64_t C = between(rng, 1, 2);
    auto x = random_param({C, 2 * between(rng, 1, 3), 2 * between(rng, 1, 3), 2 * between(rng, 1, 3)}, rng);
    g.inputs = {x};
    g.f = detail::reduce([=] { return ad::maxpool3d(x); }, rng);
  } else if (op == "conv_transpose3d_x2") {
    const std::int64_t C = between(rng, 1, 3), O = between(rng, 1, 3);
    auto x = random_param(shape4(C, 1, 3), rng);
    auto w = random_param({C, O, 2, 2, 2}, rng);
    auto b = random_param({O}, rng);
    g.inputs = {x, w, b};
    g.f = detail::reduce([=] { return ad::conv_transpose3d_x2(x, w, b); }, rng);
  } else if (op == "concat_center_crop") {
    const Shape small = shape4(between(rng, 1, 2), 1, 4);
    Shape large = {between(rng, 1, 2), 0, 0, 0};
    for (int i = 1; i < 4; ++i) large[i] = small[i] + 2 * between(rng, 0, (6 - small[i]) / 2);
    auto a = random_param(small, rng);
    auto b = random_param(large, rng);
    if (rng.uniform() < 0.5) std::swap(a, b);
    g.inputs = {a, b};
    g.f = detail::reduce([=] { return ad::concat_center_crop(a, b); }, rng);
  } else if (op == "crop3d") {
    auto x = random_param(shape4(between(rng, 1, 2), 1, 6), rng);
    Index3 origin;
    Extent3 extent;
    for (int i = 0; i < 3; ++i) {
      extent[i] = between(rng, 1, x.dim(i + 1));
      origin[i] = between(rng, 0, x.dim(i + 1) - extent[i]);
    }
    g.inputs = {x};
    g.f = detail::reduce([=] { return ad::crop3d(x, origin, extent); }, rng);
  } else if (op == "sigmoid") {
    auto x = random_param(shape4(1, 1, 6), rng, -4, 4);
    g.inputs = {x};
    g.f = detail::reduce([=] { return ad::sigmoid(x); }, rng);
  } else if (op == "elu") {
    auto x = random_param(shape4(1, 1, 6), rng, -3, 3);
    g.inputs = {x};
    g.f = detail::reduce([=] { return ad::elu(x); }, rng);
  } else if (op == "scale") {
    auto x = random_param(shape4(1, 1, 6), rng);
    const double factor = rng.uniform(-2, 2);
    g.inputs = {x};
    g.f = detail::reduce([=] { return ad::scale(x, factor); }, rng);
  } else if (op == "weighted_sum") {
    auto x = random_param(shape4(1, 1, 6), rng);
    auto coeffs = std::make_shared<std::vector<double>>(random_values(x.numel(), rng));
    g.inputs = {x};
    g.f = [=] { return ad::weighted_sum<double>(x, *coeffs); };
  } else if (op == "weighted_masked_bce") {
    const Shape s = shape4(1, 1, 6);
    auto p = random_param(s, rng, 0.05, 0.95);
    auto target = std::make_shared<Volume>(random_mask({s[1], s[2], s[3]}, 0.4, rng));
    auto dontcare = std::make_shared<Volume>(random_mask({s[1], s[2], s[3]}, 0.3, rng));
    dontcare->u8()[0] = 0;  // keep at least one cared voxel
    ad::LossConfig cfg;
    cfg.root_weight = rng.uniform(1, 12);
    cfg.use_dontcare = rng.uniform() < 0.5;
    g.inputs = {p};
    g.f = [=] { return ad::weighted_masked_bce(p, *target, dontcare.get(), cfg); };
  } else {
    throw std::invalid_argument("unknown op " + op);
  }
  return g;
}

}  // namespace rootseg::testing
