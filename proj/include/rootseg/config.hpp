#pragma once

#include <filesystem>
#include <json.hpp>
#include <vector>

#include "rootseg/net.hpp"
#include "rootseg/synth.hpp"
#include "rootseg/train.hpp"

namespace rootseg {

struct EvalConfig {
  std::vector<double> tolerances = {0, 1, 2, 3, 4, 5};
  double threshold = 0.5;
  double confusion_tolerance = 1.0;

  void validate() const;
};

/// The four sections of a run configuration file.
struct RunConfig {
  DatasetConfig gen;
  NetConfig net;
  TrainConfig train;
  EvalConfig eval;
};

// Serialization writes every field. Parsing starts from the defaults,
// overrides the keys present and rejects unknown keys with kConfig.
nlohmann::json to_json(const RootGenParams& p);
nlohmann::json to_json(const SoilSpec& s);
nlohmann::json to_json(const DatasetConfig& c);
nlohmann::json to_json(const NetConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const EvalConfig& c);
nlohmann::json to_json(const RunConfig& c);

RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
void write_json(const nlohmann::json& j, const std::filesystem::path& path);

/// Parses "0,1,2.5" into numbers.
std::vector<double> parse_number_list(const std::string& text);

}  // namespace rootseg
