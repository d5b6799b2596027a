#include "rootseg/config.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "rootseg/error.hpp"

namespace rootseg {

using nlohmann::json;

void EvalConfig::validate() const {
  if (tolerances.empty()) throw Error(ErrorCode::kConfig, "eval: tolerances must not be empty");
  for (double t : tolerances) {
    if (!(t >= 0) || !std::isfinite(t)) throw Error(ErrorCode::kConfig, "eval: tolerances must be >= 0");
  }
  if (!(threshold >= 0 && threshold <= 1)) throw Error(ErrorCode::kConfig, "eval: threshold must be in [0,1]");
  if (!(confusion_tolerance >= 0)) throw Error(ErrorCode::kConfig, "eval: confusion_tolerance must be >= 0");
}

namespace {

// Reads known keys of one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorCode::kConfig, "config: '" + path_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    known_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorCode::kConfig, "config: '" + path_ + "." + key + "' has the wrong type");
    }
  }

  const json* child(const char* key) {
    known_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!known_.count(key)) throw Error(ErrorCode::kConfig, "config: unknown key '" + path_ + "." + key + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> known_;
};

void read(Section s, RootGenParams& p) {
  s.get("domain_size", p.domain_size);
  s.get("start_offset", p.start_offset);
  s.get("taproot_length_min", p.taproot_length_min);
  s.get("taproot_length_max", p.taproot_length_max);
  s.get("lateral_length_min", p.lateral_length_min);
  s.get("lateral_length_max", p.lateral_length_max);
  s.get("step_length", p.step_length);
  s.get("direction_jitter", p.direction_jitter);
  s.get("gravitropism", p.gravitropism);
  s.get("lateral_gravitropism", p.lateral_gravitropism);
  s.get("branching_rate", p.branching_rate);
  s.get("child_radius_ratio_min", p.child_radius_ratio_min);
  s.get("child_radius_ratio_max", p.child_radius_ratio_max);
  s.get("branch_angle_min", p.branch_angle_min);
  s.get("branch_angle_max", p.branch_angle_max);
  s.get("taper_rate", p.taper_rate);
  s.get("initial_radius_min", p.initial_radius_min);
  s.get("initial_radius_max", p.initial_radius_max);
  s.get("min_radius", p.min_radius);
  s.get("max_depth", p.max_depth);
  s.get("max_branches", p.max_branches);
  s.finish();
}

void read(Section s, SoilSpec& p) {
  s.get("path", p.path);
  s.get("base", p.base);
  if (const json* oct = s.child("octaves")) {
    if (!oct->is_array()) throw Error(ErrorCode::kConfig, "config: '" + s.path("octaves") + "' must be an array");
    p.octaves.clear();
    for (const auto& o : *oct) {
      NoiseOctave n;
      Section os(o, s.path("octaves[]"));
      os.get("amplitude", n.amplitude);
      os.get("frequency", n.frequency);
      os.finish();
      p.octaves.push_back(n);
    }
  }
  s.get("artifact_density", p.artifact_density);
  s.get("artifact_intensity", p.artifact_intensity);
  s.get("artifact_radius_min", p.artifact_radius_min);
  s.get("artifact_radius_max", p.artifact_radius_max);
  s.get("noise_sigma", p.noise_sigma);
  s.finish();
}

void read(Section s, DatasetConfig& c) {
  s.get("n_train", c.n_train);
  s.get("n_val", c.n_val);
  s.get("volume_size", c.volume_size);
  s.get("base_seed", c.base_seed);
  if (const json* r = s.child("root")) read(Section(*r, s.path("root")), c.root);
  if (const json* r = s.child("soil")) read(Section(*r, s.path("soil")), c.soil);
  s.get("contrast_min", c.contrast_min);
  s.get("contrast_max", c.contrast_max);
  s.get("noise_sigma_min", c.noise_sigma_min);
  s.get("noise_sigma_max", c.noise_sigma_max);
  s.get("dontcare_distance", c.dontcare_distance);
  s.get("augment_symmetry", c.augment_symmetry);
  s.get("workers", c.workers);
  s.finish();
}

void read(Section s, NetConfig& c) {
  s.get("base_channels", c.base_channels);
  s.get("sr_tail_channels", c.sr_tail_channels);
  s.finish();
}

void read(Section s, TrainConfig& c) {
  s.get("crop_size", c.crop_size);
  s.get("batch_size", c.batch_size);
  s.get("steps", c.steps);
  s.get("lr", c.adam.lr);
  s.get("beta1", c.adam.beta1);
  s.get("beta2", c.adam.beta2);
  s.get("eps", c.adam.eps);
  s.get("root_weight", c.loss.root_weight);
  s.get("use_dontcare", c.loss.use_dontcare);
  s.get("clamp_epsilon", c.loss.clamp_epsilon);
  s.get("validation_interval", c.validation_interval);
  s.get("seed", c.seed);
  s.get("dataset", c.dataset);
  s.get("min_root_fraction", c.min_root_fraction);
  s.get("max_crop_retries", c.max_crop_retries);
  s.get("tolerances", c.tolerances);
  s.get("threshold", c.threshold);
  s.get("validation_tile_size", c.validation_tile_size);
  s.get("workers", c.workers);
  s.finish();
}

void read(Section s, EvalConfig& c) {
  s.get("tolerances", c.tolerances);
  s.get("threshold", c.threshold);
  s.get("confusion_tolerance", c.confusion_tolerance);
  s.finish();
}

}  // namespace

json to_json(const RootGenParams& p) {
  return {{"domain_size", p.domain_size},
          {"start_offset", p.start_offset},
          {"taproot_length_min", p.taproot_length_min},
          {"taproot_length_max", p.taproot_length_max},
          {"lateral_length_min", p.lateral_length_min},
          {"lateral_length_max", p.lateral_length_max},
          {"step_length", p.step_length},
          {"direction_jitter", p.direction_jitter},
          {"gravitropism", p.gravitropism},
          {"lateral_gravitropism", p.lateral_gravitropism},
          {"branching_rate", p.branching_rate},
          {"child_radius_ratio_min", p.child_radius_ratio_min},
          {"child_radius_ratio_max", p.child_radius_ratio_max},
          {"branch_angle_min", p.branch_angle_min},
          {"branch_angle_max", p.branch_angle_max},
          {"taper_rate", p.taper_rate},
          {"initial_radius_min", p.initial_radius_min},
          {"initial_radius_max", p.initial_radius_max},
          {"min_radius", p.min_radius},
          {"max_depth", p.max_depth},
          {"max_branches", p.max_branches}};
}

json to_json(const SoilSpec& s) {
  json octaves = json::array();
  for (const auto& o : s.octaves) octaves.push_back({{"amplitude", o.amplitude}, {"frequency", o.frequency}});
  return {{"path", s.path},
          {"base", s.base},
          {"octaves", octaves},
          {"artifact_density", s.artifact_density},
          {"artifact_intensity", s.artifact_intensity},
          {"artifact_radius_min", s.artifact_radius_min},
          {"artifact_radius_max", s.artifact_radius_max},
          {"noise_sigma", s.noise_sigma}};
}

json to_json(const DatasetConfig& c) {
  return {{"n_train", c.n_train},
          {"n_val", c.n_val},
          {"volume_size", c.volume_size},
          {"base_seed", c.base_seed},
          {"root", to_json(c.root)},
          {"soil", to_json(c.soil)},
          {"contrast_min", c.contrast_min},
          {"contrast_max", c.contrast_max},
          {"noise_sigma_min", c.noise_sigma_min},
          {"noise_sigma_max", c.noise_sigma_max},
          {"dontcare_distance", c.dontcare_distance},
          {"augment_symmetry", c.augment_symmetry},
          {"workers", c.workers}};
}

json to_json(const NetConfig& c) {
  return {{"base_channels", c.base_channels}, {"sr_tail_channels", c.sr_tail_channels}};
}

json to_json(const TrainConfig& c) {
  return {{"crop_size", c.crop_size},
          {"batch_size", c.batch_size},
          {"steps", c.steps},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"eps", c.adam.eps},
          {"root_weight", c.loss.root_weight},
          {"use_dontcare", c.loss.use_dontcare},
          {"clamp_epsilon", c.loss.clamp_epsilon},
          {"validation_interval", c.validation_interval},
          {"seed", c.seed},
          {"dataset", c.dataset},
          {"min_root_fraction", c.min_root_fraction},
          {"max_crop_retries", c.max_crop_retries},
          {"tolerances", c.tolerances},
          {"threshold", c.threshold},
          {"validation_tile_size", c.validation_tile_size},
          {"workers", c.workers}};
}

json to_json(const EvalConfig& c) {
  return {{"tolerances", c.tolerances}, {"threshold", c.threshold}, {"confusion_tolerance", c.confusion_tolerance}};
}

json to_json(const RunConfig& c) {
  return {{"gen", to_json(c.gen)}, {"net", to_json(c.net)}, {"train", to_json(c.train)}, {"eval", to_json(c.eval)}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Section top(j, "config");
  if (const json* s = top.child("gen")) read(Section(*s, "gen"), c.gen);
  if (const json* s = top.child("net")) read(Section(*s, "net"), c.net);
  if (const json* s = top.child("train")) read(Section(*s, "train"), c.train);
  if (const json* s = top.child("eval")) read(Section(*s, "eval"), c.eval);
  top.finish();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, "config '" + path.string() + "': " + e.what());
  }
  return run_config_from_json(j);
}

void write_json(const json& j, const std::filesystem::path& path) {
  const std::string text = j.dump(2) + "\n";
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw Error(ErrorCode::kInvalidArgument, "empty number list");
  return out;
}

}  // namespace rootseg
