#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rootseg/volume.hpp"

namespace rootseg {

// ---- procedural roots -------------------------------------------------------

/// Continuous position in 1x voxel units; voxel v spans [v, v+1) per axis.
struct Vec3 {
  double d = 0, h = 0, w = 0;
};

struct RootVertex {
  Vec3 pos;
  double radius = 0;  // 1x voxel units
};

struct Branch {
  std::vector<RootVertex> vertices;
  int parent = -1;          // branch index, -1 for the taproot
  double parent_arc = 0.0;  // arc length along the parent where this branch starts
  int depth = 0;

  double length() const;
};

struct RootSystem {
  std::vector<Branch> branches;
};

struct RootGenParams {
  std::uint64_t seed = 0;
  double domain_size = 72;          // side of the cube the root grows in
  double start_offset = 0.2;        // max lateral start offset, fraction of domain
  double taproot_length_min = 60;
  double taproot_length_max = 90;
  double lateral_length_min = 10;
  double lateral_length_max = 35;
  double step_length = 1.0;
  double direction_jitter = 0.15;   // std of the per-step direction perturbation (rad)
  double gravitropism = 0.1;        // per-step blend toward straight down (taproot)
  double lateral_gravitropism = 0.02;
  double branching_rate = 0.08;     // expected laterals per unit parent length
  double child_radius_ratio_min = 0.45;
  double child_radius_ratio_max = 0.7;
  double branch_angle_min = 0.9;    // rad from the parent direction
  double branch_angle_max = 1.5;
  double taper_rate = 0.004;        // fractional radius loss per unit length
  double initial_radius_min = 1.5;
  double initial_radius_max = 2.8;
  double min_radius = 0.5;
  int max_depth = 2;
  int max_branches = 400;

  void validate() const;
};

/// Stochastic branching walk. The taproot starts at the top (d = 0) near the
/// lateral center, heading down (+d); laterals spawn as a Poisson process
/// along every branch shallower than max_depth.
RootSystem generate_root(const RootGenParams& params);

struct RootRaster {
  Volume occ_sr;       // u8 (1,2s,2s,2s)
  Volume occ_frac_1x;  // f32 (1,s,s,s), mean of the 8 children
};

/// Capsule-union rasterization at 2x: an SR voxel is set iff its center lies
/// within r(t) of a branch segment, r linearly interpolated along it.
RootRaster rasterize(const RootSystem& root, std::int64_t grid);

/// Mean of each 2x2x2 block of a binary SR volume.
Volume downsample_fraction(const Volume& occ_sr);

// ---- soil -------------------------------------------------------------------

struct NoiseOctave {
  double amplitude = 0;
  double frequency = 0;  // lattice cells per voxel
};

struct SoilSpec {
  /// Non-empty: load this RVOL and center-crop it; the fields below are ignored.
  std::string path;
  double base = 0.3;
  std::vector<NoiseOctave> octaves = {{0.08, 1.0 / 16}, {0.04, 1.0 / 6}};
  double artifact_density = 3e-4;  // expected bright blobs per voxel
  double artifact_intensity = 0.2;
  double artifact_radius_min = 0.6;
  double artifact_radius_max = 1.8;
  double noise_sigma = 0.03;

  void validate() const;
};

/// Soil volume (1,D,H,W) with values in [0,1], deterministic in seed.
Volume make_soil(const SoilSpec& spec, const Extent3& dims, std::uint64_t seed);

// ---- sample composition -----------------------------------------------------

/// One of the 48 axis-aligned symmetries of the cube: output axis i reads
/// input axis perm[i], mirrored when flip[i].
struct CubeSymmetry {
  std::array<int, 3> perm{0, 1, 2};
  std::array<bool, 3> flip{false, false, false};

  static CubeSymmetry from_index(int index);  // 0..47, 0 is the identity
  CubeSymmetry inverse() const;
  bool is_identity() const;
};

Volume apply_symmetry(const Volume& v, const CubeSymmetry& g);

struct Sample {
  Volume mri;       // f32 (1,s,s,s)
  Volume target;    // u8 (1,2s,2s,2s)
  Volume dontcare;  // u8 (1,2s,2s,2s)
};

Sample apply_symmetry(const Sample& s, const CubeSymmetry& g);

struct Augmentation {
  double contrast = 0.3;     // root intensity above the soil mean
  double noise_sigma = 0.0;  // additive Gaussian noise on the composite
  CubeSymmetry symmetry;
  double dontcare_distance = 1.0;  // SR voxels
  std::uint64_t seed = 0;
};

/// mri = (1-f)*soil + f*(mean(soil) + contrast) + N(0, sigma), clamped to
/// [0,1]; the symmetry is then applied to all three volumes.
Sample compose_sample(const Volume& occ_frac_1x, const Volume& occ_sr, const Volume& soil, const Augmentation& aug);

/// Flags voxels within `distance` (Euclidean, SR voxels) of the root/soil
/// boundary on either side: distance to the nearest root voxel for soil
/// voxels, distance to the nearest soil voxel for root voxels.
Volume make_dontcare(const Volume& occ_sr, double distance);

// ---- datasets ---------------------------------------------------------------

struct DatasetConfig {
  std::int64_t n_train = 24;
  std::int64_t n_val = 6;
  std::int64_t volume_size = 72;
  std::uint64_t base_seed = 1;
  RootGenParams root;
  SoilSpec soil;
  double contrast_min = 0.15;
  double contrast_max = 0.35;
  double noise_sigma_min = 0.02;
  double noise_sigma_max = 0.06;
  double dontcare_distance = 1.0;
  bool augment_symmetry = true;
  int workers = 1;

  void validate() const;
};

/// Sample with global index `index` (train samples first, then validation);
/// its seed is base_seed + index, independent of generation order.
Sample generate_sample(const DatasetConfig& cfg, std::int64_t index);

struct SampleFiles {
  std::int64_t index = 0;
  std::uint64_t seed = 0;
  std::string mri, target, dontcare;  // relative to the dataset directory
};

struct DatasetManifest {
  std::vector<SampleFiles> train;
  std::vector<SampleFiles> val;
};

/// Writes <out>/{train,val}/NNNN.{mri,target,dontcare}.rvol and manifest.json.
DatasetManifest generate_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir);

DatasetManifest read_manifest(const std::filesystem::path& dir);
Sample load_sample(const std::filesystem::path& dir, const SampleFiles& files);

}  // namespace rootseg
