#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "rootseg/net.hpp"
#include "rootseg/volume.hpp"

namespace rootseg {

/// The network commutes with input shifts by multiples of 4 (two 2x poolings)
/// but not with shifts by 2. To make the result independent of the tile size,
/// every SR coordinate y is always computed with the same pooling phase:
/// along each axis, y with (y / 4) % 2 == 0 comes from windows whose padded
/// origin is 0 mod 4 (lane 0), the rest from windows at 2 mod 4 (lane 1).
struct Tile {
  VoxelBox input;   // window in the padded 1x volume, extent s per axis
  VoxelBox output;  // SR box covered by the network output, clipped to the volume
  Index3 lane;      // per axis 0 or 1; only SR voxels of this lane are written
};

/// True if the SR coordinate `y` belongs to `lane`.
inline bool in_lane(std::int64_t y, std::int64_t lane) { return (y / 4) % 2 == lane; }

struct TilePlan {
  std::int64_t tile_size = 0;
  Extent3 volume;
  Extent3 pad_before;
  Extent3 pad_after;
  std::vector<Tile> tiles;
};

/// Windows of size s over the volume reflection-padded by 21 in front. Along
/// each axis, lane 0 windows sit at padded origins 0, T, 2T, ... and lane 1
/// windows at 2, 2+T, ... with T = s - 40, so each SR voxel has exactly one
/// writer. The back padding is whatever the last window needs.
TilePlan tile_plan(const Extent3& volume, std::int64_t s, const NetConfig& cfg = {});

/// Smallest valid tile size needing one window per lane and axis, capped at
/// `max_size` (then the largest valid size <= max_size).
std::int64_t single_tile_size(const Extent3& volume, std::int64_t max_size = 256);

/// Mirror padding without edge repetition; pads longer than the data repeat
/// the mirror pattern.
Volume reflect_pad(const Volume& v, const Extent3& before, const Extent3& after);

struct Segmentation {
  Volume prob;  // f32 (1,2D,2H,2W)
  Volume seg;   // u8, prob >= threshold
};

Volume threshold_probabilities(const Volume& prob, double threshold);

/// Tiled full-volume inference; tiles run on `workers` threads.
Segmentation segment_volume(const Network<float>& net, const Volume& volume, double threshold,
                            std::int64_t tile_size = 60, int workers = 1);

}  // namespace rootseg
