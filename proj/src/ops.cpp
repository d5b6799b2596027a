#include "rootseg/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "rootseg/error.hpp"

namespace rootseg::ad {

namespace {

// Upper bound on elements of an im2col / scatter scratch block.
constexpr std::int64_t kScratchBudget = std::int64_t{1} << 22;

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const MatRM<T>>;
template <typename T>
using Map = Eigen::Map<MatRM<T>>;
template <typename T>
using StridedMap = Eigen::Map<MatRM<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const MatRM<T>, 0, Eigen::OuterStride<>>;

struct Dims4 {
  std::int64_t c, d, h, w;
  std::int64_t spatial() const { return d * h * w; }
};

template <typename T>
Dims4 dims4(const Tensor<T>& t, const char* what) {
  if (t.shape().size() != 4) {
    throw Error(ErrorCode::kShape, std::string(what) + ": expected (C,D,H,W), got " + shape_string(t.shape()));
  }
  return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
}

// Unfolds output depth rows [d0, d0+nd) of a valid k^3 convolution into a
// (C*k^3) x (nd*Ho*Wo) row-major matrix.
template <typename T>
void im2col(const T* in, const Dims4& id, std::int64_t k, std::int64_t d0, std::int64_t nd,
            std::int64_t ho, std::int64_t wo, T* col) {
  const std::int64_t n = nd * ho * wo;
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < id.c; ++c)
    for (std::int64_t kd = 0; kd < k; ++kd)
      for (std::int64_t kh = 0; kh < k; ++kh)
        for (std::int64_t kw = 0; kw < k; ++kw, ++row) {
          T* dst = col + row * n;
          for (std::int64_t od = 0; od < nd; ++od)
            for (std::int64_t oh = 0; oh < ho; ++oh) {
              const T* src = in + ((c * id.d + d0 + od + kd) * id.h + oh + kh) * id.w + kw;
              std::copy(src, src + wo, dst);
              dst += wo;
            }
        }
}

template <typename T>
void col2im_add(const T* col, const Dims4& id, std::int64_t k, std::int64_t d0, std::int64_t nd,
                std::int64_t ho, std::int64_t wo, T* in_grad) {
  const std::int64_t n = nd * ho * wo;
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < id.c; ++c)
    for (std::int64_t kd = 0; kd < k; ++kd)
      for (std::int64_t kh = 0; kh < k; ++kh)
        for (std::int64_t kw = 0; kw < k; ++kw, ++row) {
          const T* src = col + row * n;
          for (std::int64_t od = 0; od < nd; ++od)
            for (std::int64_t oh = 0; oh < ho; ++oh) {
              T* dst = in_grad + ((c * id.d + d0 + od + kd) * id.h + oh + kh) * id.w + kw;
              for (std::int64_t x = 0; x < wo; ++x) dst[x] += src[x];
              src += wo;
            }
        }
}

std::int64_t slab_depth(std::int64_t rows, std::int64_t per_slice, std::int64_t depth) {
  return std::clamp<std::int64_t>(kScratchBudget / std::max<std::int64_t>(1, rows * per_slice), 1, depth);
}

}  // namespace

template <typename T>
Tensor<T> conv3d_valid(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  const Dims4 id = dims4(input, "conv3d_valid input");
  if (weight.shape().size() != 5 || weight.dim(2) != weight.dim(3) || weight.dim(2) != weight.dim(4)) {
    throw Error(ErrorCode::kShape, "conv3d_valid: weight must be (O,C,k,k,k), got " + shape_string(weight.shape()));
  }
  const std::int64_t oc = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != id.c) {
    throw Error(ErrorCode::kShape, "conv3d_valid: channel mismatch, input has " + std::to_string(id.c) +
                                       " channels, weight expects " + std::to_string(weight.dim(1)));
  }
  if (bias.numel() != oc) throw Error(ErrorCode::kShape, "conv3d_valid: bias length must equal output channels");
  if (id.d < k || id.h < k || id.w < k) {
    throw Error(ErrorCode::kShape, "conv3d_valid: spatial dims " + shape_string(input.shape()) +
                                       " smaller than kernel " + std::to_string(k));
  }
  const std::int64_t od = id.d - k + 1, oh = id.h - k + 1, ow = id.w - k + 1;
  const std::int64_t plane = oh * ow, ospatial = od * plane, kk = id.c * k * k * k;
  const std::int64_t slab = slab_depth(kk, plane, od);

  std::vector<T> out(static_cast<std::size_t>(oc * ospatial));
  std::vector<T> col(static_cast<std::size_t>(kk * slab * plane));
  ConstMap<T> wmat(weight.value().data(), oc, kk);
  for (std::int64_t d0 = 0; d0 < od; d0 += slab) {
    const std::int64_t nd = std::min(slab, od - d0), n = nd * plane;
    im2col(input.value().data(), id, k, d0, nd, oh, ow, col.data());
    StridedMap<T> omat(out.data() + d0 * plane, oc, n, Eigen::OuterStride<>(ospatial));
    omat.noalias() = wmat * ConstMap<T>(col.data(), kk, n);
  }
  const auto b = bias.value();
  for (std::int64_t o = 0; o < oc; ++o) {
    T* row = out.data() + o * ospatial;
    for (std::int64_t i = 0; i < ospatial; ++i) row[i] += b[o];
  }

  auto bw = [id, k, oc, od, oh, ow, slab](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    Node<T>& w = *self.parents[1];
    Node<T>& bn = *self.parents[2];
    const std::int64_t plane = oh * ow, ospatial = od * plane, kk = id.c * k * k * k;
    const T* gout = self.grad.data();
    if (bn.requires_grad) {
      auto& gb = bn.ensure_grad();
      for (std::int64_t o = 0; o < oc; ++o) {
        T acc = 0;
        const T* row = gout + o * ospatial;
        for (std::int64_t i = 0; i < ospatial; ++i) acc += row[i];
        gb[o] += acc;
      }
    }
    if (!w.requires_grad && !in.requires_grad) return;
    std::vector<T> col(static_cast<std::size_t>(kk * slab * plane));
    ConstMap<T> wmat(w.value.data(), oc, kk);
    for (std::int64_t d0 = 0; d0 < od; d0 += slab) {
      const std::int64_t nd = std::min(slab, od - d0), n = nd * plane;
      ConstStridedMap<T> gmat(gout + d0 * plane, oc, n, Eigen::OuterStride<>(ospatial));
      if (w.requires_grad) {
        im2col(in.value.data(), id, k, d0, nd, oh, ow, col.data());
        Map<T>(w.ensure_grad().data(), oc, kk).noalias() += gmat * ConstMap<T>(col.data(), kk, n).transpose();
      }
      if (in.requires_grad) {
        Map<T>(col.data(), kk, n).noalias() = wmat.transpose() * gmat;
        col2im_add(col.data(), id, k, d0, nd, oh, ow, in.ensure_grad().data());
      }
    }
  };
  return make_result<T>("conv3d_valid", {oc, od, oh, ow}, std::move(out), {input, weight, bias}, bw);
}

template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& input) {
  const Dims4 id = dims4(input, "maxpool3d input");
  if (id.d % 2 || id.h % 2 || id.w % 2) {
    throw Error(ErrorCode::kShape, "maxpool3d: odd spatial dim in " + shape_string(input.shape()));
  }
  const std::int64_t od = id.d / 2, oh = id.h / 2, ow = id.w / 2;
  const std::int64_t n = id.c * od * oh * ow;
  std::vector<T> out(static_cast<std::size_t>(n));
  auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n));
  const T* x = input.value().data();
  std::int64_t o = 0;
  for (std::int64_t c = 0; c < id.c; ++c)
    for (std::int64_t d = 0; d < od; ++d)
      for (std::int64_t h = 0; h < oh; ++h)
        for (std::int64_t w = 0; w < ow; ++w, ++o) {
          std::int64_t best = ((c * id.d + 2 * d) * id.h + 2 * h) * id.w + 2 * w;
          for (int dd = 0; dd < 2; ++dd)
            for (int hh = 0; hh < 2; ++hh)
              for (int ww = 0; ww < 2; ++ww) {
                const std::int64_t i = ((c * id.d + 2 * d + dd) * id.h + 2 * h + hh) * id.w + 2 * w + ww;
                if (x[i] > x[best]) best = i;
              }
          out[o] = x[best];
          (*argmax)[o] = best;
        }
  auto bw = [argmax](Node<T>& self) {
    auto& gin = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < argmax->size(); ++i) gin[(*argmax)[i]] += self.grad[i];
  };
  return make_result<T>("maxpool3d", {id.c, od, oh, ow}, std::move(out), {input}, bw);
}

template <typename T>
Tensor<T> conv_transpose3d_x2(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  const Dims4 id = dims4(input, "conv_transpose3d_x2 input");
  if (weight.shape().size() != 5 || weight.dim(2) != 2 || weight.dim(3) != 2 || weight.dim(4) != 2) {
    throw Error(ErrorCode::kShape,
                "conv_transpose3d_x2: weight must be (C,O,2,2,2), got " + shape_string(weight.shape()));
  }
  if (weight.dim(0) != id.c) {
    throw Error(ErrorCode::kShape, "conv_transpose3d_x2: channel mismatch, input has " + std::to_string(id.c) +
                                       " channels, weight expects " + std::to_string(weight.dim(0)));
  }
  const std::int64_t oc = weight.dim(1);
  if (bias.numel() != oc) {
    throw Error(ErrorCode::kShape, "conv_transpose3d_x2: bias length must equal output channels");
  }
  const std::int64_t rows = oc * 8, plane = id.h * id.w, nspatial = id.spatial();
  const std::int64_t od = 2 * id.d, oh = 2 * id.h, ow = 2 * id.w;
  const std::int64_t slab = slab_depth(rows, plane, id.d);

  std::vector<T> out(static_cast<std::size_t>(oc * od * oh * ow));
  std::vector<T> scratch(static_cast<std::size_t>(rows * slab * plane));
  ConstMap<T> wmat(weight.value().data(), id.c, rows);
  const auto b = bias.value();
  for (std::int64_t d0 = 0; d0 < id.d; d0 += slab) {
    const std::int64_t nd = std::min(slab, id.d - d0), n = nd * plane;
    ConstStridedMap<T> xmat(input.value().data() + d0 * plane, id.c, n, Eigen::OuterStride<>(nspatial));
    Map<T>(scratch.data(), rows, n).noalias() = wmat.transpose() * xmat;
    for (std::int64_t o = 0; o < oc; ++o)
      for (int a = 0; a < 8; ++a) {
        const T* src = scratch.data() + (o * 8 + a) * n;
        const int ad = a >> 2, ah = (a >> 1) & 1, aw = a & 1;
        for (std::int64_t d = 0; d < nd; ++d)
          for (std::int64_t h = 0; h < id.h; ++h) {
            T* dst = out.data() + ((o * od + 2 * (d0 + d) + ad) * oh + 2 * h + ah) * ow + aw;
            for (std::int64_t w = 0; w < id.w; ++w) dst[2 * w] = *src++ + b[o];
          }
      }
  }

  auto bw = [id, oc, slab](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    Node<T>& w = *self.parents[1];
    Node<T>& bn = *self.parents[2];
    const std::int64_t rows = oc * 8, plane = id.h * id.w, nspatial = id.spatial();
    const std::int64_t od = 2 * id.d, oh = 2 * id.h, ow = 2 * id.w, ospatial = od * oh * ow;
    const T* gout = self.grad.data();
    if (bn.requires_grad) {
      auto& gb = bn.ensure_grad();
      for (std::int64_t o = 0; o < oc; ++o) {
        T acc = 0;
        for (std::int64_t i = 0; i < ospatial; ++i) acc += gout[o * ospatial + i];
        gb[o] += acc;
      }
    }
    if (!w.requires_grad && !in.requires_grad) return;
    std::vector<T> scratch(static_cast<std::size_t>(rows * slab * plane));
    ConstMap<T> wmat(w.value.data(), id.c, rows);
    for (std::int64_t d0 = 0; d0 < id.d; d0 += slab) {
      const std::int64_t nd = std::min(slab, id.d - d0), n = nd * plane;
      for (std::int64_t o = 0; o < oc; ++o)
        for (int a = 0; a < 8; ++a) {
          T* dst = scratch.data() + (o * 8 + a) * n;
          const int ad = a >> 2, ah = (a >> 1) & 1, aw = a & 1;
          for (std::int64_t d = 0; d < nd; ++d)
            for (std::int64_t h = 0; h < id.h; ++h) {
              const T* src = gout + ((o * od + 2 * (d0 + d) + ad) * oh + 2 * h + ah) * ow + aw;
              for (std::int64_t x = 0; x < id.w; ++x) *dst++ = src[2 * x];
            }
        }
      ConstMap<T> gmat(scratch.data(), rows, n);
      if (w.requires_grad) {
        ConstStridedMap<T> xmat(in.value.data() + d0 * plane, id.c, n, Eigen::OuterStride<>(nspatial));
        Map<T>(w.ensure_grad().data(), id.c, rows).noalias() += xmat * gmat.transpose();
      }
      if (in.requires_grad) {
        StridedMap<T> gin(in.ensure_grad().data() + d0 * plane, id.c, n, Eigen::OuterStride<>(nspatial));
        gin.noalias() += wmat * gmat;
      }
    }
  };
  return make_result<T>("conv_transpose3d_x2", {oc, od, oh, ow}, std::move(out), {input, weight, bias}, bw);
}

template <typename T>
Tensor<T> concat_center_crop(const Tensor<T>& a, const Tensor<T>& b) {
  const Dims4 da = dims4(a, "concat_center_crop a"), db = dims4(b, "concat_center_crop b");
  const std::int64_t ext[3] = {std::min(da.d, db.d), std::min(da.h, db.h), std::min(da.w, db.w)};
  const std::int64_t sa[3] = {da.d, da.h, da.w}, sb[3] = {db.d, db.h, db.w};
  std::int64_t off_a[3], off_b[3];
  for (int i = 0; i < 3; ++i) {
    if ((sa[i] - ext[i]) % 2 || (sb[i] - ext[i]) % 2) {
      throw Error(ErrorCode::kShape, "concat_center_crop: odd margin between " + shape_string(a.shape()) +
                                         " and " + shape_string(b.shape()));
    }
    off_a[i] = (sa[i] - ext[i]) / 2;
    off_b[i] = (sb[i] - ext[i]) / 2;
  }
  const std::int64_t oc = da.c + db.c, plane = ext[1] * ext[2], ospatial = ext[0] * plane;

  // Visits (output offset, source offset, row length) for every copied row.
  auto for_rows = [=](auto&& fn) {
    for (int which = 0; which < 2; ++which) {
      const Dims4& d = which == 0 ? da : db;
      const std::int64_t* off = which == 0 ? off_a : off_b;
      const std::int64_t c0 = which == 0 ? 0 : da.c;
      for (std::int64_t c = 0; c < d.c; ++c)
        for (std::int64_t z = 0; z < ext[0]; ++z)
          for (std::int64_t y = 0; y < ext[1]; ++y) {
            const std::int64_t dst = (c0 + c) * ospatial + z * plane + y * ext[2];
            const std::int64_t src = ((c * d.d + z + off[0]) * d.h + y + off[1]) * d.w + off[2];
            fn(which, dst, src, ext[2]);
          }
    }
  };

  std::vector<T> out(static_cast<std::size_t>(oc * ospatial));
  const T* src_data[2] = {a.value().data(), b.value().data()};
  for_rows([&](int which, std::int64_t dst, std::int64_t src, std::int64_t len) {
    std::copy(src_data[which] + src, src_data[which] + src + len, out.data() + dst);
  });
  auto bw = [for_rows](Node<T>& self) {
    for_rows([&](int which, std::int64_t dst, std::int64_t src, std::int64_t len) {
      Node<T>& parent = *self.parents[which];
      if (!parent.requires_grad) return;
      T* g = parent.ensure_grad().data() + src;
      const T* s = self.grad.data() + dst;
      for (std::int64_t i = 0; i < len; ++i) g[i] += s[i];
    });
  };
  return make_result<T>("concat_center_crop", {oc, ext[0], ext[1], ext[2]}, std::move(out), {a, b}, bw);
}

template <typename T>
Tensor<T> crop3d(const Tensor<T>& x, const Index3& origin, const Extent3& extent) {
  const Dims4 d = dims4(x, "crop3d input");
  const std::int64_t full[3] = {d.d, d.h, d.w};
  for (int a = 0; a < 3; ++a) {
    if (origin[a] < 0 || extent[a] < 1 || origin[a] + extent[a] > full[a]) {
      throw Error(ErrorCode::kShape, "crop3d: box exceeds " + shape_string(x.shape()));
    }
  }
  auto for_rows = [d, origin, extent](auto&& fn) {
    std::int64_t dst = 0;
    for (std::int64_t c = 0; c < d.c; ++c)
      for (std::int64_t z = 0; z < extent.d; ++z)
        for (std::int64_t y = 0; y < extent.h; ++y, dst += extent.w) {
          fn(dst, ((c * d.d + z + origin.d) * d.h + y + origin.h) * d.w + origin.w, extent.w);
        }
  };
  std::vector<T> out(static_cast<std::size_t>(d.c * extent.volume()));
  const T* src = x.value().data();
  for_rows([&](std::int64_t o, std::int64_t i, std::int64_t len) { std::copy(src + i, src + i + len, out.data() + o); });
  auto bw = [for_rows](Node<T>& self) {
    T* g = self.parents[0]->ensure_grad().data();
    for_rows([&](std::int64_t o, std::int64_t i, std::int64_t len) {
      for (std::int64_t k = 0; k < len; ++k) g[i + k] += self.grad[o + k];
    });
  };
  return make_result<T>("crop3d", {d.c, extent.d, extent.h, extent.w}, std::move(out), {x}, bw);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  const T lo = std::numeric_limits<T>::min();
  const T hi = T(1) - std::numeric_limits<T>::epsilon() / 2;
  std::vector<T> out(x.value().size());
  const auto v = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    T y;
    if (v[i] >= 0) {
      y = T(1) / (T(1) + std::exp(-v[i]));
    } else {
      const T e = std::exp(v[i]);
      y = e / (T(1) + e);
    }
    out[i] = std::clamp(y, lo, hi);
  }
  auto bw = [](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T y = self.value[i];
      g[i] += self.grad[i] * y * (T(1) - y);
    }
  };
  return make_result<T>("sigmoid", x.shape(), std::move(out), {x}, bw);
}

template <typename T>
Tensor<T> elu(const Tensor<T>& x) {
  std::vector<T> out(x.value().size());
  const auto v = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] > 0 ? v[i] : std::expm1(v[i]);
  auto bw = [](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    const auto& in = self.parents[0]->value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * (in[i] > 0 ? T(1) : self.value[i] + T(1));
    }
  };
  return make_result<T>("elu", x.shape(), std::move(out), {x}, bw);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.value().begin(), x.value().end());
  for (auto& v : out) v *= factor;
  auto bw = [factor](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  };
  return make_result<T>("scale", x.shape(), std::move(out), {x}, bw);
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, std::span<const T> coeffs) {
  if (static_cast<std::int64_t>(coeffs.size()) != x.numel()) {
    throw Error(ErrorCode::kShape, "weighted_sum: coefficient count mismatch");
  }
  auto c = std::make_shared<std::vector<T>>(coeffs.begin(), coeffs.end());
  T acc = 0;
  for (std::size_t i = 0; i < c->size(); ++i) acc += (*c)[i] * x.value()[i];
  auto bw = [c](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*c)[i] * self.grad[0];
  };
  return make_result<T>("weighted_sum", {}, {acc}, {x}, bw);
}

void LossConfig::validate() const {
  if (!(root_weight > 0)) throw Error(ErrorCode::kConfig, "loss: root_weight must be > 0");
  if (!(clamp_epsilon > 0 && clamp_epsilon < 0.5)) {
    throw Error(ErrorCode::kConfig, "loss: clamp_epsilon must lie in (0, 0.5)");
  }
}

template <typename T>
Tensor<T> weighted_masked_bce(const Tensor<T>& pred, const Volume& target, const Volume* dontcare,
                              const LossConfig& cfg) {
  cfg.validate();
  const auto y = target.u8();
  const auto& td = target.dims();
  const bool spatial_ok = pred.shape().size() != 4 ||
                          (pred.dim(1) == td.d && pred.dim(2) == td.h && pred.dim(3) == td.w);
  if (pred.numel() != target.size() || !spatial_ok) {
    throw Error(ErrorCode::kShape, "bce: prediction " + shape_string(pred.shape()) + " does not match target");
  }
  std::span<const std::uint8_t> dc;
  if (cfg.use_dontcare && dontcare != nullptr) {
    if (!(dontcare->dims() == target.dims())) {
      throw Error(ErrorCode::kShape, "bce: don't-care mask does not match target");
    }
    dc = dontcare->u8();
  }
  const auto p = pred.value();
  const double eps = cfg.clamp_epsilon, w_root = cfg.root_weight;
  std::int64_t cared = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!dc.empty() && dc[i]) continue;
    ++cared;
    const double pc = std::clamp(static_cast<double>(p[i]), eps, 1.0 - eps);
    total += y[i] ? -w_root * std::log(pc) : -std::log(1.0 - pc);
  }
  if (cared == 0) throw Error(ErrorCode::kInvalidArgument, "bce: every voxel is flagged don't-care");
  const double inv_n = 1.0 / static_cast<double>(cared);

  auto labels = std::make_shared<std::vector<std::uint8_t>>(y.begin(), y.end());
  auto mask = std::make_shared<std::vector<std::uint8_t>>(dc.begin(), dc.end());
  auto bw = [labels, mask, eps, w_root, inv_n](Node<T>& self) {
    Node<T>& pn = *self.parents[0];
    auto& g = pn.ensure_grad();
    const double upstream = static_cast<double>(self.grad[0]) * inv_n;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!mask->empty() && (*mask)[i]) continue;
      const double pv = pn.value[i];
      if (pv < eps || pv > 1.0 - eps) continue;  // clamped: zero slope
      // Weight applied last so a root voxel's slope is exactly w_root times
      // the slope of a soil voxel with the mirrored probability.
      if ((*labels)[i]) {
        g[i] += static_cast<T>(w_root * (upstream * (-1.0 / pv)));
      } else {
        g[i] += static_cast<T>(upstream * (1.0 / (1.0 - pv)));
      }
    }
  };
  return make_result<T>("weighted_masked_bce", {}, {static_cast<T>(total * inv_n)}, {pred}, bw);
}

template <typename T>
Tensor<T> tensor_from_volume(const Volume& v) {
  const auto& d = v.dims();
  std::vector<T> data(static_cast<std::size_t>(v.size()));
  for (std::int64_t i = 0; i < v.size(); ++i) data[i] = static_cast<T>(v.value(i));
  return Tensor<T>::constant({d.c, d.d, d.h, d.w}, std::move(data));
}

template <typename T>
Volume volume_from_tensor(const Tensor<T>& t) {
  const Dims4 d = dims4(t, "volume_from_tensor");
  return Volume({d.c, d.d, d.h, d.w}, std::vector<float>(t.value().begin(), t.value().end()));
}

#define ROOTSEG_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> conv3d_valid(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> maxpool3d(const Tensor<T>&);                                                    \
  template Tensor<T> conv_transpose3d_x2(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> concat_center_crop(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> crop3d(const Tensor<T>&, const Index3&, const Extent3&);                        \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                      \
  template Tensor<T> elu(const Tensor<T>&);                                                          \
  template Tensor<T> scale(const Tensor<T>&, T);                                                     \
  template Tensor<T> weighted_sum(const Tensor<T>&, std::span<const T>);                             \
  template Tensor<T> weighted_masked_bce(const Tensor<T>&, const Volume&, const Volume*, const LossConfig&); \
  template Tensor<T> tensor_from_volume<T>(const Volume&);                                           \
  template Volume volume_from_tensor(const Tensor<T>&);

ROOTSEG_INSTANTIATE_OPS(float)
ROOTSEG_INSTANTIATE_OPS(double)

}  // namespace rootseg::ad
