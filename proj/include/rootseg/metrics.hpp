#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rootseg/volume.hpp"

namespace rootseg {

/// Squared Euclidean distance (voxel^2) from every voxel to the nearest
/// feature voxel of a mask.
struct DistanceField {
  static constexpr std::int64_t kInfinity = std::numeric_limits<std::int64_t>::max();

  Extent3 dims;
  std::vector<std::int64_t> squared;  // kInfinity everywhere iff the mask is empty
};

/// Exact squared EDT of a single-channel binary mask (nonzero = feature),
/// by three separable lower-envelope-of-parabolas passes.
DistanceField edt_squared(const Volume& mask);

/// True if squared distance `sq` is within tolerance `d` (exact for integral d).
bool within_tolerance(std::int64_t sq, double d);

struct ToleranceRow {
  double tolerance = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t pred_count = 0;
  std::int64_t gt_count = 0;
  std::int64_t matched_pred = 0;  // predicted voxels within d of ground truth
  std::int64_t matched_gt = 0;    // ground-truth voxels within d of a prediction
};

struct ToleranceReport {
  std::vector<ToleranceRow> rows;
  bool dontcare_removed = false;
};

/// Fills precision/recall/F1 of a row from its counts. Both sets empty gives
/// 1/1/1; exactly one empty gives 0/0/0.
void finalize_row(ToleranceRow& row);

/// Distance-tolerant precision/recall/F1. Don't-care voxels are removed from
/// both masks before matching.
ToleranceReport distance_tolerant_prf(const Volume& pred, const Volume& gt, std::span<const double> tolerances,
                                      const Volume* dontcare = nullptr);

/// Pools counts of several reports with identical tolerance lists.
ToleranceReport micro_average(std::span<const ToleranceReport> reports);

/// `tolerance,precision,recall,f1,pred_count,gt_count` with 6 decimals.
std::string report_csv(const ToleranceReport& report);
void write_report_csv(const ToleranceReport& report, const std::filesystem::path& path);

enum class Confusion : std::uint8_t { kBackground = 0, kTruePositive = 1, kFalsePositive = 2, kFalseNegative = 3 };

/// u8 volume of Confusion categories.
Volume confusion_map(const Volume& pred, const Volume& gt, double tolerance, const Volume* dontcare = nullptr);

/// One binary PPM (P6) per slice along `axis`, named slice_NNNN.ppm.
/// TP green, FP red, FN blue, background black.
std::vector<std::filesystem::path> export_confusion_slices(const Volume& confusion, Axis axis,
                                                           const std::filesystem::path& out_dir);

}  // namespace rootseg
