#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rootseg/adam.hpp"
#include "rootseg/metrics.hpp"
#include "rootseg/net.hpp"
#include "rootseg/ops.hpp"
#include "rootseg/rng.hpp"
#include "rootseg/synth.hpp"

namespace rootseg {

struct TrainConfig {
  std::int64_t crop_size = 60;
  std::int64_t batch_size = 1;  // crops per step, gradients accumulated
  std::int64_t steps = 2000;
  ad::AdamOptions adam{.lr = 5e-4};  // 1e-3 collapsed root_weight=10 runs into a constant output
  ad::LossConfig loss;
  std::int64_t validation_interval = 0;  // 0: validate once after the last step
  std::uint64_t seed = 0;
  std::string dataset;  // directory with manifest.json; the CLI's --data overrides it
  double min_root_fraction = 0.5;  // probability that a crop must contain root
  int max_crop_retries = 20;
  std::vector<double> tolerances = {0, 1, 2, 3, 4, 5};
  double threshold = 0.5;
  std::int64_t validation_tile_size = 0;  // 0: one tile per validation volume
  int workers = 1;

  void validate() const;
};

struct Crop {
  Volume input;     // f32 (1,s,s,s)
  Volume target;    // u8 (1,2s-84,...)
  Volume dontcare;  // u8, same dims as target
  Index3 input_origin;
  Index3 sr_origin;
  int attempts = 1;
};

/// Uniform random window of size s. The SR crops cover the net's output
/// region: origin 2*(input_origin + margin), extent 2s-84. With
/// `require_root`, windows are redrawn up to `max_retries` times until the
/// target holds a root voxel; the last draw is accepted regardless.
Crop sample_crop(const Sample& sample, std::int64_t s, Rng& rng, bool require_root, int max_retries = 20);

struct StepRecord {
  std::int64_t step = 0;
  double loss = 0;
  double seconds = 0;  // wall clock since training started
};

struct ValidationResult {
  std::int64_t step = 0;
  std::vector<ToleranceReport> per_volume;
  ToleranceReport micro;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<ValidationResult> validations;
};

/// Tiled segmentation of each volume, tolerant P/R/F1 with don't-care
/// exclusion, and the micro-average over volumes.
ValidationResult validate(const Network<float>& net, std::span<const Sample> samples,
                          std::span<const double> tolerances, double threshold, std::int64_t tile_size = 0,
                          int workers = 1);

/// F1 used to pick the best checkpoint: tolerance 1 if present, else the first.
double selection_f1(const ToleranceReport& report);

struct TrainResult {
  Checkpoint final_checkpoint;
  std::optional<Checkpoint> best_checkpoint;
  TrainLog log;
};

struct TrainOutputs {
  std::filesystem::path dir;  // empty: keep everything in memory
  std::function<void(const StepRecord&)> on_step;
};

/// Writes train_log.csv (incrementally), validation.csv, final.ckpt and
/// best.ckpt under outputs.dir.
TrainResult train(const TrainConfig& cfg, const NetConfig& net_cfg, const TrainOutputs& outputs = {});

/// Same loop on in-memory samples.
TrainResult train(const TrainConfig& cfg, const NetConfig& net_cfg, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const TrainOutputs& outputs = {});

std::string validation_csv_header();
std::string validation_csv_rows(const ValidationResult& v);

}  // namespace rootseg
