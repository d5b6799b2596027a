#include "rootseg/infer.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "rootseg/error.hpp"

namespace rootseg {

namespace {

constexpr std::int64_t kShiftPeriod = 4;  // input shift the network commutes with

}  // namespace

TilePlan tile_plan(const Extent3& volume, std::int64_t s, const NetConfig& cfg) {
  const ShapePlan sp = shape_plan(s, cfg);
  const std::int64_t margin = sp.input_margin;
  const std::int64_t covered = s - 2 * margin;  // 1x voxels per window, 2 mod 4
  const std::int64_t stride = covered + 2;      // same-lane stride, 0 mod 4
  TilePlan plan;
  plan.tile_size = s;
  plan.volume = volume;

  struct Window {
    std::int64_t origin, lane;
  };
  std::array<std::vector<Window>, 3> axis;
  for (int a = 0; a < 3; ++a) {
    const std::int64_t n = volume[a];
    if (n < 1) throw Error(ErrorCode::kShape, "tile plan: empty volume");
    std::int64_t end = 0;
    for (std::int64_t lane = 0; lane < 2; ++lane) {
      for (std::int64_t o = lane * kShiftPeriod / 2; o < n; o += stride) {
        axis[a].push_back({o, lane});
        end = std::max(end, o + s);
      }
    }
    plan.pad_before[a] = margin;
    plan.pad_after[a] = end - n - margin;
  }

  for (const auto& wd : axis[0])
    for (const auto& wh : axis[1])
      for (const auto& ww : axis[2]) {
        const Window* w[3] = {&wd, &wh, &ww};
        Tile t;
        for (int a = 0; a < 3; ++a) {
          t.input.origin[a] = w[a]->origin;
          t.input.extent[a] = s;
          // Network output index 0 is 1x voxel `origin` of the unpadded volume.
          t.output.origin[a] = 2 * w[a]->origin;
          t.output.extent[a] = std::min(2 * covered, 2 * (volume[a] - w[a]->origin));
          t.lane[a] = w[a]->lane;
        }
        plan.tiles.push_back(t);
      }
  return plan;
}

std::int64_t single_tile_size(const Extent3& volume, std::int64_t max_size) {
  const std::int64_t need = std::max({volume.d, volume.h, volume.w});
  std::int64_t best = 0;
  for (std::int64_t s = 1; s <= max_size; ++s) {
    if (!is_valid_input_size(s)) continue;
    best = s;
    if (s - 2 * shape_plan(s).input_margin + 2 >= need) return s;
  }
  if (best == 0) throw Error(ErrorCode::kInvalidArgument, "no valid tile size <= " + std::to_string(max_size));
  return best;
}

namespace {

std::int64_t mirror(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

Volume reflect_pad(const Volume& v, const Extent3& before, const Extent3& after) {
  const auto& dims = v.dims();
  const Extent3 in = dims.spatial();
  const VolumeDims od{dims.c, in.d + before.d + after.d, in.h + before.h + after.h, in.w + before.w + after.w};
  Volume out(od, v.dtype());
  std::array<std::vector<std::int64_t>, 3> map;
  for (int a = 0; a < 3; ++a) {
    const std::int64_t n = a == 0 ? od.d : a == 1 ? od.h : od.w;
    for (std::int64_t i = 0; i < n; ++i) map[a].push_back(mirror(i - before[a], in[a]));
  }
  auto run = [&](auto src, auto dst) {
    std::int64_t k = 0;
    for (std::int64_t c = 0; c < dims.c; ++c)
      for (std::int64_t d = 0; d < od.d; ++d)
        for (std::int64_t h = 0; h < od.h; ++h) {
          const std::int64_t row = v.index(c, map[0][d], map[1][h], 0);
          for (std::int64_t w = 0; w < od.w; ++w) dst[k++] = src[row + map[2][w]];
        }
  };
  if (v.dtype() == DType::kU8) {
    run(v.u8(), out.u8());
  } else {
    run(v.f32(), out.f32());
  }
  return out;
}

Volume threshold_probabilities(const Volume& prob, double threshold) {
  Volume seg = Volume::zeros_u8(prob.dims());
  auto s = seg.u8();
  for (std::int64_t i = 0; i < prob.size(); ++i) s[i] = prob.value(i) >= threshold ? 1 : 0;
  return seg;
}

Segmentation segment_volume(const Network<float>& net, const Volume& volume, double threshold,
                            std::int64_t tile_size, int workers) {
  if (volume.dims().c != 1) throw Error(ErrorCode::kShape, "segment: volume must have one channel");
  const Extent3 ext = volume.dims().spatial();
  const TilePlan plan = tile_plan(ext, tile_size, net.config());
  const Volume padded = reflect_pad(volume.to_f32(), plan.pad_before, plan.pad_after);

  Volume prob = Volume::zeros_f32({1, 2 * ext.d, 2 * ext.h, 2 * ext.w});
  auto dst = prob.f32();
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < plan.tiles.size(); i = next++) {
      try {
        const Tile& t = plan.tiles[i];
        const Volume out = forward(net, crop(padded, t.input));
        const auto src = out.f32();
        std::array<std::vector<std::int64_t>, 3> keep;  // box-relative indices in the tile's lane
        for (int a = 0; a < 3; ++a) {
          for (std::int64_t i = 0; i < t.output.extent[a]; ++i) {
            if (in_lane(t.output.origin[a] + i, t.lane[a])) keep[a].push_back(i);
          }
        }
        for (std::int64_t d : keep[0])
          for (std::int64_t h : keep[1]) {
            const std::int64_t from = out.index(0, d, h, 0);
            const std::int64_t to = prob.index(0, t.output.origin.d + d, t.output.origin.h + h, t.output.origin.w);
            for (std::int64_t w : keep[2]) dst[to + w] = src[from + w];
          }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = plan.tiles.size();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(plan.tiles.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  Volume seg = threshold_probabilities(prob, threshold);
  return {std::move(prob), std::move(seg)};
}

}  // namespace rootseg
