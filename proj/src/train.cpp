#include "rootseg/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>

#include "rootseg/error.hpp"
#include "rootseg/infer.hpp"

namespace rootseg {

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::kConfig, what);
  };
  try {
    shape_plan(crop_size);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, std::string("train: crop_size: ") + e.what());
  }
  require(steps >= 1, "train: steps must be >= 1");
  require(batch_size >= 1, "train: batch_size must be >= 1");
  require(adam.lr >= 0, "train: lr must be >= 0");
  require(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1, "train: betas must be in [0,1)");
  require(adam.eps > 0, "train: eps must be > 0");
  require(validation_interval >= 0, "train: validation_interval must be >= 0");
  require(min_root_fraction >= 0 && min_root_fraction <= 1, "train: min_root_fraction must be in [0,1]");
  require(max_crop_retries >= 0, "train: max_crop_retries must be >= 0");
  require(!tolerances.empty(), "train: tolerances must not be empty");
  for (double t : tolerances) require(t >= 0 && std::isfinite(t), "train: tolerances must be >= 0");
  require(threshold >= 0 && threshold <= 1, "train: threshold must be in [0,1]");
  require(validation_tile_size == 0 || is_valid_input_size(validation_tile_size),
          "train: validation_tile_size is not a valid input size");
  require(workers >= 1, "train: workers must be >= 1");
  loss.validate();
}

Crop sample_crop(const Sample& sample, std::int64_t s, Rng& rng, bool require_root, int max_retries) {
  const ShapePlan plan = shape_plan(s);
  const Extent3 src = sample.mri.dims().spatial();
  for (int a = 0; a < 3; ++a) {
    if (src[a] < s) {
      throw Error(ErrorCode::kShape, "crop: source extent " + std::to_string(src[a]) + " smaller than crop " +
                                         std::to_string(s));
    }
  }
  const Extent3 sr_extent = Extent3::cube(plan.output_size);
  Crop c;
  for (int attempt = 1;; ++attempt) {
    Index3 origin;
    for (int a = 0; a < 3; ++a) origin[a] = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(src[a] - s + 1)));
    Index3 sr_origin;
    for (int a = 0; a < 3; ++a) sr_origin[a] = 2 * (origin[a] + plan.input_margin);
    Volume target = crop(sample.target, {sr_origin, sr_extent});
    bool has_root = false;
    for (auto v : target.u8()) {
      if (v) {
        has_root = true;
        break;
      }
    }
    if (!require_root || has_root || attempt > max_retries) {
      c.input = crop(sample.mri, {origin, Extent3::cube(s)});
      c.target = std::move(target);
      c.dontcare = crop(sample.dontcare, {sr_origin, sr_extent});
      c.input_origin = origin;
      c.sr_origin = sr_origin;
      c.attempts = attempt;
      return c;
    }
  }
}

double selection_f1(const ToleranceReport& report) {
  if (report.rows.empty()) return 0.0;
  for (const auto& r : report.rows) {
    if (r.tolerance == 1.0) return r.f1;
  }
  return report.rows.front().f1;
}

ValidationResult validate(const Network<float>& net, std::span<const Sample> samples,
                          std::span<const double> tolerances, double threshold, std::int64_t tile_size,
                          int workers) {
  ValidationResult out;
  for (const auto& s : samples) {
    const std::int64_t tile = tile_size > 0 ? tile_size : single_tile_size(s.mri.dims().spatial());
    const Segmentation seg = segment_volume(net, s.mri, threshold, tile, workers);
    out.per_volume.push_back(distance_tolerant_prf(seg.seg, s.target, tolerances, &s.dontcare));
  }
  out.micro = micro_average(out.per_volume);
  return out;
}

std::string validation_csv_header() { return "step,volume,tolerance,precision,recall,f1,pred_count,gt_count\n"; }

std::string validation_csv_rows(const ValidationResult& v) {
  std::string out;
  auto emit = [&](const std::string& volume, const ToleranceReport& r) {
    char line[256];
    for (const auto& row : r.rows) {
      std::snprintf(line, sizeof line, "%lld,%s,%.6f,%.6f,%.6f,%.6f,%lld,%lld\n", static_cast<long long>(v.step),
                    volume.c_str(), row.tolerance, row.precision, row.recall, row.f1,
                    static_cast<long long>(row.pred_count), static_cast<long long>(row.gt_count));
      out += line;
    }
  };
  for (std::size_t i = 0; i < v.per_volume.size(); ++i) emit(std::to_string(i), v.per_volume[i]);
  emit("micro", v.micro);
  return out;
}

namespace {

// Crops for one step depend only on (seed, step), so they can be prepared
// ahead of the optimizer without changing the sequence.
std::vector<Crop> step_crops(const TrainConfig& cfg, std::span<const Sample> train_set, std::int64_t step) {
  Rng rng(mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(step)));
  std::vector<Crop> crops;
  for (std::int64_t b = 0; b < cfg.batch_size; ++b) {
    const auto& sample = train_set[rng.below(train_set.size())];
    const bool require_root = rng.uniform() < cfg.min_root_fraction;
    crops.push_back(sample_crop(sample, cfg.crop_size, rng, require_root, cfg.max_crop_retries));
  }
  return crops;
}

class TextSink {
 public:
  TextSink(const std::filesystem::path& path, const std::string& header) {
    if (path.empty()) return;
    file_.open(path, std::ios::binary | std::ios::trunc);
    if (!file_) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
    write(header);
  }

  void write(const std::string& text) {
    if (!file_.is_open()) return;
    file_ << text;
    file_.flush();
    if (!file_) throw Error(ErrorCode::kIo, "write failed");
  }

 private:
  std::ofstream file_;
};

void check_samples(std::span<const Sample> set, const char* what) {
  for (const auto& s : set) {
    const auto& d = s.mri.dims();
    if (d.c != 1 || !(s.target.dims() == VolumeDims{1, 2 * d.d, 2 * d.h, 2 * d.w}) ||
        !(s.dontcare.dims() == s.target.dims())) {
      throw Error(ErrorCode::kShape, std::string("train: malformed ") + what + " sample");
    }
  }
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const NetConfig& net_cfg, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const TrainOutputs& outputs) {
  cfg.validate();
  net_cfg.validate();
  if (train_set.empty()) throw Error(ErrorCode::kConfig, "train: no training samples");
  check_samples(train_set, "training");
  check_samples(val_set, "validation");
  for (const auto& s : train_set) {
    for (int a = 0; a < 3; ++a) {
      if (s.mri.dims().spatial()[a] < cfg.crop_size) {
        throw Error(ErrorCode::kShape, "train: training volume smaller than crop_size");
      }
    }
  }

  const auto dir = outputs.dir;
  if (!dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create '" + dir.string() + "'");
  }
  TextSink log_csv(dir.empty() ? dir : dir / "train_log.csv", "step,loss,seconds\n");
  TextSink val_csv(dir.empty() || val_set.empty() ? std::filesystem::path{} : dir / "validation.csv",
                   validation_csv_header());

  Network<float> net = build<float>(net_cfg, cfg.seed);
  ad::AdamState<float> adam;
  adam.options = cfg.adam;
  TrainResult result{Checkpoint{net.clone(), {0, cfg.seed}}, std::nullopt, {}};
  double best_f1 = -1.0;

  auto run_validation = [&](std::int64_t step) {
    ValidationResult v = validate(net, val_set, cfg.tolerances, cfg.threshold, cfg.validation_tile_size,
                                  cfg.workers);
    v.step = step;
    val_csv.write(validation_csv_rows(v));
    const double f1 = selection_f1(v.micro);
    if (f1 > best_f1) {
      best_f1 = f1;
      result.best_checkpoint = Checkpoint{net.clone(), {step, cfg.seed}};
      if (!dir.empty()) save_checkpoint(net, {step, cfg.seed}, dir / "best.ckpt");
    }
    result.log.validations.push_back(std::move(v));
  };

  const auto t0 = std::chrono::steady_clock::now();
  std::future<std::vector<Crop>> pending;
  if (cfg.workers > 1) pending = std::async(std::launch::async, step_crops, std::cref(cfg), train_set, 0);
  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    std::vector<Crop> crops = cfg.workers > 1 ? pending.get() : step_crops(cfg, train_set, step);
    if (cfg.workers > 1 && step + 1 < cfg.steps) {
      pending = std::async(std::launch::async, step_crops, std::cref(cfg), train_set, step + 1);
    }

    net.zero_grad();
    double loss_sum = 0;
    for (const auto& c : crops) {
      auto pred = net.forward(ad::tensor_from_volume<float>(c.input));
      auto loss = ad::weighted_masked_bce(pred, c.target, cfg.loss.use_dontcare ? &c.dontcare : nullptr, cfg.loss);
      if (crops.size() > 1) loss = ad::scale(loss, 1.0f / static_cast<float>(crops.size()));
      loss_sum += static_cast<double>(loss.item());
      ad::backward(loss);
    }
    ad::adam_step(net.parameters(), adam);

    StepRecord rec{step, loss_sum, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    char line[128];
    std::snprintf(line, sizeof line, "%lld,%.9g,%.3f\n", static_cast<long long>(step), rec.loss, rec.seconds);
    log_csv.write(line);
    if (outputs.on_step) outputs.on_step(rec);
    result.log.steps.push_back(rec);

    const std::int64_t done = step + 1;
    const bool periodic = cfg.validation_interval > 0 && done % cfg.validation_interval == 0;
    if (!val_set.empty() && (periodic || done == cfg.steps)) run_validation(done);
  }

  result.final_checkpoint = Checkpoint{net.clone(), {cfg.steps, cfg.seed}};
  if (!dir.empty()) save_checkpoint(net, {cfg.steps, cfg.seed}, dir / "final.ckpt");
  return result;
}

TrainResult train(const TrainConfig& cfg, const NetConfig& net_cfg, const TrainOutputs& outputs) {
  cfg.validate();
  if (cfg.dataset.empty()) throw Error(ErrorCode::kConfig, "train: dataset path is empty");
  const std::filesystem::path data = cfg.dataset;
  const DatasetManifest m = read_manifest(data);
  std::vector<Sample> train_set, val_set;
  for (const auto& f : m.train) train_set.push_back(load_sample(data, f));
  for (const auto& f : m.val) val_set.push_back(load_sample(data, f));
  return train(cfg, net_cfg, train_set, val_set, outputs);
}

}  // namespace rootseg
