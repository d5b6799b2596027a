#include "rootseg/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <json.hpp>
#include <mutex>
#include <numbers>
#include <thread>

#include "rootseg/config.hpp"
#include "rootseg/error.hpp"
#include "rootseg/metrics.hpp"
#include "rootseg/rng.hpp"

namespace rootseg {

namespace {

Vec3 operator+(Vec3 a, Vec3 b) { return {a.d + b.d, a.h + b.h, a.w + b.w}; }
Vec3 operator-(Vec3 a, Vec3 b) { return {a.d - b.d, a.h - b.h, a.w - b.w}; }
Vec3 operator*(double s, Vec3 a) { return {s * a.d, s * a.h, s * a.w}; }
double dot(Vec3 a, Vec3 b) { return a.d * b.d + a.h * b.h + a.w * b.w; }
Vec3 cross(Vec3 a, Vec3 b) {
  return {a.h * b.w - a.w * b.h, a.w * b.d - a.d * b.w, a.d * b.h - a.h * b.d};
}
Vec3 normalized(Vec3 a) {
  const double n = std::sqrt(dot(a, a));
  return n > 0 ? (1.0 / n) * a : Vec3{1, 0, 0};
}

constexpr Vec3 kDown{1, 0, 0};

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kConfig, what);
}

void require_range(double lo, double hi, const std::string& name) {
  require(std::isfinite(lo) && std::isfinite(hi) && lo <= hi, name + ": empty range");
}

}  // namespace

double Branch::length() const {
  double len = 0;
  for (std::size_t i = 1; i < vertices.size(); ++i) {
    const Vec3 d = vertices[i].pos - vertices[i - 1].pos;
    len += std::sqrt(dot(d, d));
  }
  return len;
}

void RootGenParams::validate() const {
  require(domain_size > 0, "root: domain_size must be > 0");
  require(step_length > 0, "root: step_length must be > 0");
  require(start_offset >= 0, "root: start_offset must be >= 0");
  require_range(taproot_length_min, taproot_length_max, "root: taproot length");
  require_range(lateral_length_min, lateral_length_max, "root: lateral length");
  require_range(child_radius_ratio_min, child_radius_ratio_max, "root: child radius ratio");
  require_range(branch_angle_min, branch_angle_max, "root: branch angle");
  require_range(initial_radius_min, initial_radius_max, "root: initial radius");
  require(taproot_length_min >= 0 && lateral_length_min >= 0, "root: lengths must be >= 0");
  require(direction_jitter >= 0, "root: direction_jitter must be >= 0");
  require(gravitropism >= 0 && gravitropism <= 1, "root: gravitropism must be in [0,1]");
  require(lateral_gravitropism >= 0 && lateral_gravitropism <= 1, "root: lateral_gravitropism must be in [0,1]");
  require(branching_rate >= 0, "root: branching_rate must be >= 0");
  require(child_radius_ratio_min > 0 && child_radius_ratio_max <= 1, "root: child radius ratio must be in (0,1]");
  require(taper_rate >= 0 && taper_rate * step_length < 1, "root: taper_rate must be in [0, 1/step_length)");
  require(min_radius > 0, "root: min_radius must be > 0");
  require(initial_radius_min >= min_radius, "root: initial radius must be >= min_radius");
  require(max_depth >= 0, "root: max_depth must be >= 0");
  require(max_branches >= 1, "root: max_branches must be >= 1");
}

namespace {

struct Pending {
  Vec3 pos;
  Vec3 dir;
  double radius;
  int parent;
  double parent_arc;
  int depth;
};

// Grows one branch. Stops at its sampled length or once it has left the
// domain by more than a few voxels.
Branch grow(const RootGenParams& p, const Pending& start, Rng& rng) {
  Branch b;
  b.parent = start.parent;
  b.parent_arc = start.parent_arc;
  b.depth = start.depth;
  const bool tap = start.depth == 0;
  const double length = tap ? rng.uniform(p.taproot_length_min, p.taproot_length_max)
                            : rng.uniform(p.lateral_length_min, p.lateral_length_max);
  const double bias = tap ? p.gravitropism : p.lateral_gravitropism;
  const double margin = 4.0;

  Vec3 pos = start.pos;
  Vec3 dir = start.dir;
  double radius = start.radius;
  b.vertices.push_back({pos, radius});
  const auto steps = static_cast<std::int64_t>(std::floor(length / p.step_length));
  for (std::int64_t i = 0; i < steps; ++i) {
    const Vec3 jitter{rng.normal(), rng.normal(), rng.normal()};
    dir = normalized(dir + p.direction_jitter * jitter);
    dir = normalized((1.0 - bias) * dir + bias * kDown);
    pos = pos + p.step_length * dir;
    radius = std::max(p.min_radius, radius * (1.0 - p.taper_rate * p.step_length));
    b.vertices.push_back({pos, radius});
    const bool outside = pos.d < -margin || pos.h < -margin || pos.w < -margin || pos.d > p.domain_size + margin ||
                         pos.h > p.domain_size + margin || pos.w > p.domain_size + margin;
    if (outside) break;
  }
  return b;
}

// Direction at angle `theta` from `axis`, azimuth `phi`.
Vec3 deflect(Vec3 axis, double theta, double phi) {
  const Vec3 helper = std::abs(axis.d) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  const Vec3 u = normalized(cross(axis, helper));
  const Vec3 v = cross(axis, u);
  const Vec3 side = std::cos(phi) * u + std::sin(phi) * v;
  return normalized(std::cos(theta) * axis + std::sin(theta) * side);
}

}  // namespace

RootSystem generate_root(const RootGenParams& p) {
  p.validate();
  Rng rng(p.seed);
  RootSystem root;
  const double center = p.domain_size / 2.0;
  const double spread = p.start_offset * p.domain_size;
  std::vector<Pending> queue;
  queue.push_back({{0.0, center + rng.uniform(-spread, spread), center + rng.uniform(-spread, spread)},
                   kDown,
                   rng.uniform(p.initial_radius_min, p.initial_radius_max),
                   -1,
                   0.0,
                   0});

  // Breadth-first so that max_branches trims the finest laterals first.
  for (std::size_t next = 0; next < queue.size(); ++next) {
    const Pending start = queue[next];
    const int index = static_cast<int>(root.branches.size());
    root.branches.push_back(grow(p, start, rng));
    const Branch& b = root.branches.back();
    if (b.depth >= p.max_depth || p.branching_rate <= 0) continue;

    // Poisson events along the arc; a lateral starts at the vertex at or
    // before the event.
    double arc = rng.exponential(p.branching_rate);
    const double total = static_cast<double>(b.vertices.size() - 1) * p.step_length;
    while (arc < total) {
      const auto vi = static_cast<std::size_t>(std::floor(arc / p.step_length));
      const RootVertex& at = b.vertices[vi];
      const double ratio = rng.uniform(p.child_radius_ratio_min, p.child_radius_ratio_max);
      const double theta = rng.uniform(p.branch_angle_min, p.branch_angle_max);
      const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const Vec3 axis = vi + 1 < b.vertices.size() ? normalized(b.vertices[vi + 1].pos - at.pos)
                                                    : normalized(at.pos - b.vertices[vi - 1].pos);
      // Laterals of a branch already at r_min would be clamped up to it.
      if (at.radius > p.min_radius && static_cast<int>(queue.size()) < p.max_branches) {
        queue.push_back({at.pos, deflect(axis, theta, phi), std::max(p.min_radius, ratio * at.radius), index,
                         static_cast<double>(vi) * p.step_length, b.depth + 1});
      }
      arc += rng.exponential(p.branching_rate);
    }
  }
  return root;
}

// ---- rasterization ----------------------------------------------------------

namespace {

struct Capsule {
  Vec3 a, b;  // SR units
  double ra, rb;
};

void paint(const Capsule& c, std::int64_t n, std::span<std::uint8_t> out) {
  const double rmax = std::max(c.ra, c.rb);
  auto lo = [&](double x, double y) {
    return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(std::min(x, y) - rmax - 0.5)), 0, n);
  };
  auto hi = [&](double x, double y) {
    return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil(std::max(x, y) + rmax + 0.5)), 0, n);
  };
  const std::int64_t d0 = lo(c.a.d, c.b.d), d1 = hi(c.a.d, c.b.d);
  const std::int64_t h0 = lo(c.a.h, c.b.h), h1 = hi(c.a.h, c.b.h);
  const std::int64_t w0 = lo(c.a.w, c.b.w), w1 = hi(c.a.w, c.b.w);
  const Vec3 ab = c.b - c.a;
  const double len2 = dot(ab, ab);
  for (std::int64_t d = d0; d < d1; ++d)
    for (std::int64_t h = h0; h < h1; ++h)
      for (std::int64_t w = w0; w < w1; ++w) {
        const Vec3 x{d + 0.5, h + 0.5, w + 0.5};
        const double t = len2 > 0 ? std::clamp(dot(x - c.a, ab) / len2, 0.0, 1.0) : 0.0;
        const Vec3 off = x - (c.a + t * ab);
        const double r = c.ra + t * (c.rb - c.ra);
        if (dot(off, off) <= r * r) out[static_cast<std::size_t>((d * n + h) * n + w)] = 1;
      }
}

}  // namespace

Volume downsample_fraction(const Volume& occ_sr) {
  const auto& sd = occ_sr.dims();
  if (sd.c != 1 || sd.d % 2 || sd.h % 2 || sd.w % 2) {
    throw Error(ErrorCode::kShape, "downsample: need one channel and even dims");
  }
  Volume out = Volume::zeros_f32({1, sd.d / 2, sd.h / 2, sd.w / 2});
  auto o = out.f32();
  const auto in = occ_sr.u8();
  const auto& od = out.dims();
  for (std::int64_t d = 0; d < od.d; ++d)
    for (std::int64_t h = 0; h < od.h; ++h)
      for (std::int64_t w = 0; w < od.w; ++w) {
        int sum = 0;
        for (int k = 0; k < 8; ++k) sum += in[occ_sr.index(0, 2 * d + (k >> 2), 2 * h + ((k >> 1) & 1), 2 * w + (k & 1))];
        o[out.index(0, d, h, w)] = static_cast<float>(sum) / 8.0f;
      }
  return out;
}

RootRaster rasterize(const RootSystem& root, std::int64_t grid) {
  if (grid < 1) throw Error(ErrorCode::kInvalidArgument, "rasterize: grid must be >= 1");
  const std::int64_t n = 2 * grid;
  Volume occ = Volume::zeros_u8({1, n, n, n});
  auto out = occ.u8();
  for (const auto& b : root.branches) {
    if (b.vertices.empty()) continue;
    if (b.vertices.size() == 1) {
      const auto& v = b.vertices[0];
      paint({2.0 * v.pos, 2.0 * v.pos, 2.0 * v.radius, 2.0 * v.radius}, n, out);
      continue;
    }
    for (std::size_t i = 1; i < b.vertices.size(); ++i) {
      const auto& u = b.vertices[i - 1];
      const auto& v = b.vertices[i];
      paint({2.0 * u.pos, 2.0 * v.pos, 2.0 * u.radius, 2.0 * v.radius}, n, out);
    }
  }
  Volume frac = downsample_fraction(occ);
  return {std::move(occ), std::move(frac)};
}

// ---- soil -------------------------------------------------------------------

void SoilSpec::validate() const {
  if (!path.empty()) return;
  require(base >= 0 && base <= 1, "soil: base must be in [0,1]");
  for (const auto& o : octaves) {
    require(o.amplitude >= 0 && o.frequency > 0, "soil: octave amplitude must be >= 0 and frequency > 0");
  }
  require(artifact_density >= 0, "soil: artifact_density must be >= 0");
  require(artifact_intensity >= 0 && artifact_intensity <= 1, "soil: artifact_intensity must be in [0,1]");
  require(artifact_radius_min > 0, "soil: artifact_radius_min must be > 0");
  require_range(artifact_radius_min, artifact_radius_max, "soil: artifact radius");
  require(noise_sigma >= 0, "soil: noise_sigma must be >= 0");
}

namespace {

void add_value_noise(std::vector<double>& acc, const Extent3& dims, const NoiseOctave& o, Rng& rng) {
  std::array<std::int64_t, 3> n{};
  for (int a = 0; a < 3; ++a) n[a] = static_cast<std::int64_t>(std::floor(dims[a] * o.frequency)) + 2;
  std::vector<double> lattice(static_cast<std::size_t>(n[0] * n[1] * n[2]));
  for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);
  auto at = [&](std::int64_t i, std::int64_t j, std::int64_t k) { return lattice[(i * n[1] + j) * n[2] + k]; };
  auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };

  std::int64_t flat = 0;
  for (std::int64_t d = 0; d < dims.d; ++d)
    for (std::int64_t h = 0; h < dims.h; ++h)
      for (std::int64_t w = 0; w < dims.w; ++w, ++flat) {
        const double p[3] = {(d + 0.5) * o.frequency, (h + 0.5) * o.frequency, (w + 0.5) * o.frequency};
        std::int64_t c[3];
        double t[3];
        for (int a = 0; a < 3; ++a) {
          c[a] = static_cast<std::int64_t>(std::floor(p[a]));
          t[a] = smooth(p[a] - static_cast<double>(c[a]));
        }
        double v = 0;
        for (int k = 0; k < 8; ++k) {
          const int bd = k >> 2, bh = (k >> 1) & 1, bw = k & 1;
          const double wgt = (bd ? t[0] : 1 - t[0]) * (bh ? t[1] : 1 - t[1]) * (bw ? t[2] : 1 - t[2]);
          v += wgt * at(c[0] + bd, c[1] + bh, c[2] + bw);
        }
        acc[flat] += o.amplitude * v;
      }
}

std::int64_t poisson(double mean, Rng& rng) {
  if (mean <= 0) return 0;
  std::int64_t k = 0;
  double t = rng.exponential(1.0);
  while (t < mean) {
    ++k;
    t += rng.exponential(1.0);
  }
  return k;
}

void add_artifacts(std::vector<double>& acc, const Extent3& dims, const SoilSpec& spec, Rng& rng) {
  const std::int64_t count = poisson(spec.artifact_density * static_cast<double>(dims.volume()), rng);
  for (std::int64_t i = 0; i < count; ++i) {
    double center[3], radius[3];
    for (int a = 0; a < 3; ++a) center[a] = rng.uniform(0.0, static_cast<double>(dims[a]));
    for (double& r : radius) r = rng.uniform(spec.artifact_radius_min, spec.artifact_radius_max);
    std::int64_t lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(center[a] - radius[a])));
      hi[a] = std::min<std::int64_t>(dims[a], static_cast<std::int64_t>(std::ceil(center[a] + radius[a])) + 1);
    }
    for (std::int64_t d = lo[0]; d < hi[0]; ++d)
      for (std::int64_t h = lo[1]; h < hi[1]; ++h)
        for (std::int64_t w = lo[2]; w < hi[2]; ++w) {
          const double x[3] = {d + 0.5, h + 0.5, w + 0.5};
          double rho2 = 0;
          for (int a = 0; a < 3; ++a) rho2 += std::pow((x[a] - center[a]) / radius[a], 2);
          if (rho2 < 1.0) acc[(d * dims.h + h) * dims.w + w] += spec.artifact_intensity * (1.0 - rho2);
        }
  }
}

}  // namespace

Volume make_soil(const SoilSpec& spec, const Extent3& dims, std::uint64_t seed) {
  spec.validate();
  if (dims.d < 1 || dims.h < 1 || dims.w < 1) throw Error(ErrorCode::kInvalidArgument, "soil: dims must be >= 1");
  if (!spec.path.empty()) {
    const Volume full = read_rvol(spec.path).to_f32();
    if (full.dims().c != 1) throw Error(ErrorCode::kShape, "soil: '" + spec.path + "' must have one channel");
    Index3 origin;
    for (int a = 0; a < 3; ++a) {
      if (dims[a] > full.dims().spatial()[a]) {
        throw Error(ErrorCode::kShape, "soil: crop larger than '" + spec.path + "' on axis " + std::to_string(a));
      }
      origin[a] = (full.dims().spatial()[a] - dims[a]) / 2;
    }
    Volume out = crop(full, {origin, dims});
    for (auto& v : out.f32()) v = std::clamp(v, 0.0f, 1.0f);
    return out;
  }

  Rng rng(seed);
  std::vector<double> acc(static_cast<std::size_t>(dims.volume()), spec.base);
  for (const auto& o : spec.octaves) add_value_noise(acc, dims, o, rng);
  add_artifacts(acc, dims, spec, rng);
  Volume out = Volume::zeros_f32({1, dims.d, dims.h, dims.w});
  auto o = out.f32();
  for (std::size_t i = 0; i < acc.size(); ++i) {
    const double noise = spec.noise_sigma > 0 ? rng.normal(0.0, spec.noise_sigma) : 0.0;
    o[i] = static_cast<float>(std::clamp(acc[i] + noise, 0.0, 1.0));
  }
  return out;
}

// ---- symmetries -------------------------------------------------------------

CubeSymmetry CubeSymmetry::from_index(int index) {
  if (index < 0 || index >= 48) throw Error(ErrorCode::kInvalidArgument, "symmetry index must be in [0,48)");
  static constexpr std::array<std::array<int, 3>, 6> kPerms = {
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  CubeSymmetry g;
  g.perm = kPerms[index / 8];
  for (int a = 0; a < 3; ++a) g.flip[a] = ((index % 8) >> (2 - a)) & 1;
  return g;
}

CubeSymmetry CubeSymmetry::inverse() const {
  CubeSymmetry g;
  for (int i = 0; i < 3; ++i) g.perm[perm[i]] = i;
  for (int j = 0; j < 3; ++j) g.flip[j] = flip[g.perm[j]];
  return g;
}

bool CubeSymmetry::is_identity() const {
  return perm == std::array<int, 3>{0, 1, 2} && flip == std::array<bool, 3>{false, false, false};
}

Volume apply_symmetry(const Volume& v, const CubeSymmetry& g) {
  if (g.is_identity()) return v;
  const auto& dims = v.dims();
  const Extent3 in = dims.spatial();
  const Extent3 out_ext{in[g.perm[0]], in[g.perm[1]], in[g.perm[2]]};
  Volume out(VolumeDims{dims.c, out_ext.d, out_ext.h, out_ext.w}, v.dtype());
  std::array<std::int64_t, 3> in_stride{in.h * in.w, in.w, 1};
  auto run = [&](auto src, auto dst) {
    std::int64_t k = 0;
    for (std::int64_t c = 0; c < dims.c; ++c) {
      const std::int64_t base = c * in.volume();
      std::array<std::int64_t, 3> o{};
      for (o[0] = 0; o[0] < out_ext.d; ++o[0])
        for (o[1] = 0; o[1] < out_ext.h; ++o[1])
          for (o[2] = 0; o[2] < out_ext.w; ++o[2]) {
            std::int64_t idx = base;
            for (int i = 0; i < 3; ++i) {
              const int a = g.perm[i];
              const std::int64_t x = g.flip[i] ? in[a] - 1 - o[i] : o[i];
              idx += x * in_stride[a];
            }
            dst[k++] = src[idx];
          }
    }
  };
  if (v.dtype() == DType::kU8) {
    run(v.u8(), out.u8());
  } else {
    run(v.f32(), out.f32());
  }
  return out;
}

Sample apply_symmetry(const Sample& s, const CubeSymmetry& g) {
  return {apply_symmetry(s.mri, g), apply_symmetry(s.target, g), apply_symmetry(s.dontcare, g)};
}

// ---- composition ------------------------------------------------------------

Volume make_dontcare(const Volume& occ_sr, double distance) {
  if (!(distance >= 0)) throw Error(ErrorCode::kInvalidArgument, "dontcare: distance must be >= 0");
  if (occ_sr.dims().c != 1) throw Error(ErrorCode::kShape, "dontcare: occupancy must have one channel");
  Volume background = Volume::zeros_u8(occ_sr.dims());
  auto bg = background.u8();
  for (std::int64_t i = 0; i < occ_sr.size(); ++i) bg[i] = occ_sr.value(i) == 0.0 ? 1 : 0;
  const DistanceField to_root = edt_squared(occ_sr);
  const DistanceField to_soil = edt_squared(background);
  Volume out = Volume::zeros_u8(occ_sr.dims());
  auto o = out.u8();
  for (std::int64_t i = 0; i < occ_sr.size(); ++i) {
    const std::int64_t sq = bg[i] ? to_root.squared[i] : to_soil.squared[i];
    o[i] = within_tolerance(sq, distance) ? 1 : 0;
  }
  return out;
}

Sample compose_sample(const Volume& occ_frac_1x, const Volume& occ_sr, const Volume& soil, const Augmentation& aug) {
  const auto& fd = occ_frac_1x.dims();
  if (!(soil.dims() == fd) || fd.c != 1) throw Error(ErrorCode::kShape, "compose: soil and occupancy dims differ");
  const VolumeDims sr{1, 2 * fd.d, 2 * fd.h, 2 * fd.w};
  if (!(occ_sr.dims() == sr)) throw Error(ErrorCode::kShape, "compose: SR occupancy must be twice the 1x dims");
  if (!(aug.noise_sigma >= 0)) throw Error(ErrorCode::kInvalidArgument, "compose: noise sigma must be >= 0");

  const Volume soil_f = soil.to_f32();
  const auto s = soil_f.f32();
  double mean = 0;
  for (float v : s) mean += v;
  mean /= static_cast<double>(s.size());
  const double root_value = mean + aug.contrast;

  Rng rng(aug.seed);
  Volume mri = Volume::zeros_f32(fd);
  auto m = mri.f32();
  for (std::int64_t i = 0; i < mri.size(); ++i) {
    const double f = occ_frac_1x.value(i);
    double v = (1.0 - f) * s[i] + f * root_value;
    if (aug.noise_sigma > 0) v += rng.normal(0.0, aug.noise_sigma);
    m[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }

  Volume target = Volume::zeros_u8(sr);
  auto t = target.u8();
  for (std::int64_t i = 0; i < target.size(); ++i) t[i] = occ_sr.value(i) != 0.0 ? 1 : 0;
  Sample out{std::move(mri), std::move(target), make_dontcare(occ_sr, aug.dontcare_distance)};
  return apply_symmetry(out, aug.symmetry);
}

// ---- datasets ---------------------------------------------------------------

void DatasetConfig::validate() const {
  require(n_train >= 0 && n_val >= 0, "gen: sample counts must be >= 0");
  require(volume_size >= 1, "gen: volume_size must be >= 1");
  require_range(contrast_min, contrast_max, "gen: contrast");
  require_range(noise_sigma_min, noise_sigma_max, "gen: noise sigma");
  require(noise_sigma_min >= 0, "gen: noise sigma must be >= 0");
  require(dontcare_distance >= 0, "gen: dontcare_distance must be >= 0");
  require(workers >= 1, "gen: workers must be >= 1");
  root.validate();
  soil.validate();
}

Sample generate_sample(const DatasetConfig& cfg, std::int64_t index) {
  const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(index);
  RootGenParams rp = cfg.root;
  rp.seed = mix_seed(seed, 1);
  rp.domain_size = static_cast<double>(cfg.volume_size);
  const RootRaster raster = rasterize(generate_root(rp), cfg.volume_size);
  const Volume soil = make_soil(cfg.soil, Extent3::cube(cfg.volume_size), mix_seed(seed, 2));

  Rng rng(mix_seed(seed, 3));
  Augmentation aug;
  aug.contrast = rng.uniform(cfg.contrast_min, cfg.contrast_max);
  aug.noise_sigma = rng.uniform(cfg.noise_sigma_min, cfg.noise_sigma_max);
  const int sym = static_cast<int>(rng.below(48));
  if (cfg.augment_symmetry) aug.symmetry = CubeSymmetry::from_index(sym);
  aug.dontcare_distance = cfg.dontcare_distance;
  aug.seed = mix_seed(seed, 4);
  return compose_sample(raster.occ_frac_1x, raster.occ_sr, soil, aug);
}

namespace {

SampleFiles files_for(const DatasetConfig& cfg, std::int64_t index) {
  const bool train = index < cfg.n_train;
  const std::int64_t local = train ? index : index - cfg.n_train;
  char stem[32];
  std::snprintf(stem, sizeof stem, "%s/%04lld", train ? "train" : "val", static_cast<long long>(local));
  const std::string s = stem;
  return {index, cfg.base_seed + static_cast<std::uint64_t>(index), s + ".mri.rvol", s + ".target.rvol",
          s + ".dontcare.rvol"};
}

nlohmann::json files_json(const SampleFiles& f) {
  return {{"index", f.index}, {"seed", f.seed}, {"mri", f.mri}, {"target", f.target}, {"dontcare", f.dontcare}};
}

}  // namespace

DatasetManifest generate_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  for (const char* sub : {"train", "val"}) {
    std::filesystem::create_directories(out_dir / sub, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create '" + (out_dir / sub).string() + "': " + ec.message());
  }

  const std::int64_t total = cfg.n_train + cfg.n_val;
  DatasetManifest manifest;
  for (std::int64_t i = 0; i < total; ++i) {
    (i < cfg.n_train ? manifest.train : manifest.val).push_back(files_for(cfg, i));
  }

  std::atomic<std::int64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::int64_t i = next++; i < total; i = next++) {
      try {
        const SampleFiles f = files_for(cfg, i);
        const Sample s = generate_sample(cfg, i);
        write_rvol(s.mri, out_dir / f.mri);
        write_rvol(s.target, out_dir / f.target);
        write_rvol(s.dontcare, out_dir / f.dontcare);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = total;
      }
    }
  };
  const int n_threads = static_cast<int>(std::min<std::int64_t>(cfg.workers, std::max<std::int64_t>(total, 1)));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  nlohmann::json j;
  j["config"] = to_json(cfg);
  j["config"].erase("workers");  // the data does not depend on it
  j["train"] = nlohmann::json::array();
  j["val"] = nlohmann::json::array();
  for (const auto& f : manifest.train) j["train"].push_back(files_json(f));
  for (const auto& f : manifest.val) j["val"].push_back(files_json(f));
  const std::string text = j.dump(2) + "\n";
  write_file_atomic(out_dir / "manifest.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  return manifest;
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const auto bytes = read_file(dir / "manifest.json");
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    auto list = [&](const char* key, std::vector<SampleFiles>& out) {
      for (const auto& e : j.at(key)) {
        out.push_back({e.at("index").get<std::int64_t>(), e.at("seed").get<std::uint64_t>(),
                       e.at("mri").get<std::string>(), e.at("target").get<std::string>(),
                       e.at("dontcare").get<std::string>()});
      }
    };
    list("train", m.train);
    list("val", m.val);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, "manifest '" + (dir / "manifest.json").string() + "': " + e.what());
  }
  return m;
}

Sample load_sample(const std::filesystem::path& dir, const SampleFiles& files) {
  Sample s{read_rvol(dir / files.mri), read_rvol(dir / files.target), read_rvol(dir / files.dontcare)};
  const auto& d = s.mri.dims();
  const VolumeDims sr{1, 2 * d.d, 2 * d.h, 2 * d.w};
  if (d.c != 1 || s.mri.dtype() != DType::kF32) throw Error(ErrorCode::kShape, files.mri + ": expected f32 (1,D,H,W)");
  if (!(s.target.dims() == sr) || !(s.dontcare.dims() == sr)) {
    throw Error(ErrorCode::kShape, files.target + ": SR volumes must be twice the input dims");
  }
  return s;
}

}  // namespace rootseg
