#include <doctest.h>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "rootseg/cli.hpp"
#include "rootseg/config.hpp"
#include "rootseg/rng.hpp"
#include "rootseg/volume.hpp"
#include "support/temp_dir.hpp"

using namespace rootseg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "rootseg");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream err, out;
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  const int code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cerr.rdbuf(old_err);
  std::cout.rdbuf(old_out);
  return {code, err.str()};
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

/// Relative path -> bytes for every regular file under dir.
std::map<std::string, std::vector<std::uint8_t>> tree(const fs::path& dir) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return out;
}

Volume random_mask(Extent3 e, std::uint64_t seed, double density) {
  Rng rng(seed);
  Volume v = Volume::zeros_u8({1, e.d, e.h, e.w});
  for (auto& x : v.u8()) x = rng.uniform() < density;
  return v;
}

json small_run_config() {
  return json::parse(R"({
    "gen": {"n_train": 1, "n_val": 1, "volume_size": 48},
    "net": {"base_channels": 2},
    "train": {"crop_size": 44, "steps": 3, "tolerances": [0, 1]}
  })");
}

}  // namespace

TEST_CASE("cli: usage errors exit 1") {
  auto r = cli({});
  CHECK(r.code == 1);
  CHECK_FALSE(r.err.empty());
  r = cli({"gen", "--out", "/tmp/x", "--bogus"});
  CHECK(r.code == 1);
  CHECK(r.err.find("--bogus") != std::string::npos);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"eval", "--pred", "a.rvol"}).code == 1);
  CHECK(cli({"infer", "--ckpt", "c", "--input", "i", "--out", "o", "--tile", "many"}).code == 1);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("cli: data and configuration errors exit 2") {
  testing::TempDir tmp("cli_err");
  const auto r = cli({"eval", "--pred", (tmp / "missing.rvol").string(), "--gt", (tmp / "missing.rvol").string(),
                      "--csv", (tmp / "out.csv").string()});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error: ", 0) == 0);

  write_json(json::parse(R"({"gen":{"volume_sise":10}})"), tmp / "bad.json");
  const auto g = cli({"gen", "--config", (tmp / "bad.json").string(), "--out", (tmp / "ds").string()});
  CHECK(g.code == 2);
  CHECK(g.err.find("gen.volume_sise") != std::string::npos);

  write_json(json::parse(R"({"train":{"crop_size":46}})"), tmp / "crop.json");
  CHECK(cli({"train", "--config", (tmp / "crop.json").string(), "--data", tmp.path().string(), "--out",
             (tmp / "run").string()})
            .code == 2);

  write_rvol(random_mask({4, 4, 4}, 1, 0.3), tmp / "a.rvol");
  write_rvol(random_mask({4, 4, 5}, 2, 0.3), tmp / "b.rvol");
  CHECK(cli({"eval", "--pred", (tmp / "a.rvol").string(), "--gt", (tmp / "b.rvol").string(), "--csv",
             (tmp / "out.csv").string()})
            .code == 2);
}

TEST_CASE("cli: eval of a prediction against itself") {
  testing::TempDir tmp("cli_eval");
  const Volume gt = random_mask({10, 11, 12}, 3, 0.1);
  write_rvol(gt, tmp / "gt.rvol");
  const auto r = cli({"eval", "--pred", (tmp / "gt.rvol").string(), "--gt", (tmp / "gt.rvol").string(), "--tolerances",
                      "0,1,2,3,4,5", "--csv", (tmp / "out" / "eval.csv").string(), "--confusion",
                      (tmp / "cm").string()});
  REQUIRE(r.code == 0);
  const auto lines = read_lines(tmp / "out" / "eval.csv");
  REQUIRE(lines.size() == 7);
  CHECK(lines[0].find("f1") != std::string::npos);
  for (std::size_t i = 1; i < lines.size(); ++i) CHECK(lines[i].find(",1.000000,1.000000,1.000000,") != std::string::npos);
  const json eff = json::parse(std::ifstream(tmp / "out" / "effective-config.json"));
  CHECK(eff["threshold"] == 0.5);
  CHECK(eff["tolerances"].size() == 6);
  CHECK(fs::exists(tmp / "cm"));
  CHECK(std::distance(fs::directory_iterator(tmp / "cm"), fs::directory_iterator{}) == 10);
}

TEST_CASE("cli: gen is reproducible and echoes its configuration") {
  testing::TempDir tmp("cli_gen");
  write_json(small_run_config(), tmp / "c.json");
  REQUIRE(cli({"gen", "--config", (tmp / "c.json").string(), "--out", (tmp / "a").string()}).code == 0);
  REQUIRE(cli({"gen", "--config", (tmp / "c.json").string(), "--out", (tmp / "b").string()}).code == 0);
  const auto a = tree(tmp / "a");
  CHECK(a.size() == 8);  // 2 samples x 3 volumes, manifest, effective config
  CHECK(a == tree(tmp / "b"));

  // The echoed file holds every default and reproduces the dataset.
  const RunConfig eff = load_run_config(tmp / "a" / "effective-config.json");
  CHECK(eff.gen.volume_size == 48);
  CHECK(to_json(eff) == to_json(run_config_from_json(small_run_config())));
  REQUIRE(cli({"gen", "--config", (tmp / "a" / "effective-config.json").string(), "--out", (tmp / "c").string()})
              .code == 0);
  CHECK(tree(tmp / "c") == a);
  REQUIRE(cli({"gen", "--config", (tmp / "c.json").string(), "--out", (tmp / "d").string(), "--workers", "2"}).code ==
          0);
  auto d = tree(tmp / "d");
  d.erase("effective-config.json");
  auto a_data = a;
  a_data.erase("effective-config.json");
  CHECK(d == a_data);
}

TEST_CASE("cli: train, infer and slices") {
  testing::TempDir tmp("cli_pipeline");
  write_json(small_run_config(), tmp / "c.json");
  const std::string ds = (tmp / "ds").string();
  REQUIRE(cli({"gen", "--config", (tmp / "c.json").string(), "--out", ds}).code == 0);
  REQUIRE(cli({"train", "--config", (tmp / "c.json").string(), "--data", ds, "--out", (tmp / "r1").string()}).code == 0);
  for (const char* f : {"final.ckpt", "best.ckpt", "train_log.csv", "validation.csv", "effective-config.json"})
    CHECK(fs::exists(tmp / "r1" / f));
  CHECK(read_lines(tmp / "r1" / "train_log.csv").size() == 4);

  // Re-running from the echoed configuration reproduces the checkpoint bitwise.
  REQUIRE(cli({"train", "--config", (tmp / "r1" / "effective-config.json").string(), "--data", ds, "--out",
               (tmp / "r2").string()})
              .code == 0);
  CHECK(read_file(tmp / "r1" / "final.ckpt") == read_file(tmp / "r2" / "final.ckpt"));
  CHECK(read_file(tmp / "r1" / "validation.csv") == read_file(tmp / "r2" / "validation.csv"));

  const std::string mri = (tmp / "ds" / "val" / "0000.mri.rvol").string();
  const std::string gt = (tmp / "ds" / "val" / "0000.target.rvol").string();
  REQUIRE(cli({"infer", "--ckpt", (tmp / "r1" / "final.ckpt").string(), "--input", mri, "--out",
               (tmp / "inf").string(), "--tile", "48", "--gt", gt})
              .code == 0);
  const Volume prob = read_rvol(tmp / "inf" / "prob.rvol");
  const Volume seg = read_rvol(tmp / "inf" / "seg.rvol");
  CHECK(prob.dims() == VolumeDims{1, 96, 96, 96});
  CHECK(prob.dtype() == DType::kF32);
  CHECK(seg.dtype() == DType::kU8);
  CHECK(read_rvol(tmp / "inf" / "confusion.rvol").dims() == seg.dims());
  CHECK(fs::exists(tmp / "inf" / "effective-config.json"));

  // eval of a probability map thresholds it first.
  REQUIRE(cli({"eval", "--pred", (tmp / "inf" / "prob.rvol").string(), "--gt", gt, "--csv",
               (tmp / "e1.csv").string()})
              .code == 0);
  REQUIRE(cli({"eval", "--pred", (tmp / "inf" / "seg.rvol").string(), "--gt", gt, "--csv",
               (tmp / "e2.csv").string()})
              .code == 0);
  CHECK(read_file(tmp / "e1.csv") == read_file(tmp / "e2.csv"));

  REQUIRE(cli({"slices", "--input", mri, "--axis", "y", "--out", (tmp / "sl").string()}).code == 0);
  CHECK(fs::exists(tmp / "sl" / "slice_0047.pgm"));
  CHECK_FALSE(fs::exists(tmp / "sl" / "slice_0048.pgm"));
}
