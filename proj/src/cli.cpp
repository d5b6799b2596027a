#include "rootseg/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "rootseg/config.hpp"
#include "rootseg/error.hpp"
#include "rootseg/infer.hpp"
#include "rootseg/metrics.hpp"
#include "rootseg/train.hpp"

namespace rootseg {

namespace {

using nlohmann::json;

void make_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create '" + dir.string() + "': " + ec.message());
}

std::filesystem::path parent_or_cwd(const std::filesystem::path& p) {
  return p.has_parent_path() ? p.parent_path() : std::filesystem::path(".");
}

RunConfig config_or_defaults(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

struct GenArgs {
  std::string config, out;
  int workers = 0;
};

void run_gen(const GenArgs& a) {
  RunConfig cfg = config_or_defaults(a.config);
  if (a.workers > 0) cfg.gen.workers = a.workers;
  cfg.gen.validate();
  make_dir(a.out);
  write_json(to_json(cfg), std::filesystem::path(a.out) / "effective-config.json");
  const auto m = generate_dataset(cfg.gen, a.out);
  std::cerr << "wrote " << m.train.size() << " training and " << m.val.size() << " validation samples to " << a.out
            << "\n";
}

struct TrainArgs {
  std::string config, data, out;
  int workers = 0;
};

void run_train(const TrainArgs& a) {
  RunConfig cfg = config_or_defaults(a.config);
  if (!a.data.empty()) cfg.train.dataset = a.data;
  if (a.workers > 0) cfg.train.workers = a.workers;
  cfg.train.validate();
  cfg.net.validate();
  make_dir(a.out);
  write_json(to_json(cfg), std::filesystem::path(a.out) / "effective-config.json");
  TrainOutputs outputs;
  outputs.dir = a.out;
  const std::int64_t every = std::max<std::int64_t>(1, cfg.train.steps / 20);
  outputs.on_step = [&](const StepRecord& r) {
    if ((r.step + 1) % every == 0 || r.step + 1 == cfg.train.steps) {
      std::fprintf(stderr, "step %lld/%lld loss %.5f (%.1fs)\n", static_cast<long long>(r.step + 1),
                   static_cast<long long>(cfg.train.steps), r.loss, r.seconds);
    }
  };
  const TrainResult result = train(cfg.train, cfg.net, outputs);
  if (!result.log.validations.empty()) {
    const auto& v = result.log.validations.back();
    std::cerr << "final validation:\n" << report_csv(v.micro);
  }
}

struct InferArgs {
  std::string ckpt, input, out, gt, dontcare;
  double threshold = 0.5;
  std::int64_t tile = 60;
  double confusion_tolerance = 1.0;
  std::string axis = "z";
  int workers = 1;
};

void run_infer(const InferArgs& a) {
  if (!(a.threshold >= 0 && a.threshold <= 1)) throw Error(ErrorCode::kConfig, "infer: threshold must be in [0,1]");
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const Volume input = read_rvol(a.input);
  make_dir(a.out);
  const json effective = {{"ckpt", a.ckpt},         {"input", a.input},         {"threshold", a.threshold},
                          {"tile", a.tile},         {"net", to_json(ck.net.config())},
                          {"gt", a.gt},             {"dontcare", a.dontcare},
                          {"confusion_tolerance", a.confusion_tolerance}, {"axis", a.axis},
                          {"workers", a.workers}};
  write_json(effective, std::filesystem::path(a.out) / "effective-config.json");
  const Segmentation seg = segment_volume(ck.net, input, a.threshold, a.tile, a.workers);
  const std::filesystem::path out = a.out;
  write_rvol(seg.prob, out / "prob.rvol");
  write_rvol(seg.seg, out / "seg.rvol");
  if (!a.gt.empty()) {
    const Volume gt = read_rvol(a.gt);
    std::optional<Volume> dc;
    if (!a.dontcare.empty()) dc = read_rvol(a.dontcare);
    const Volume cm = confusion_map(seg.seg, gt, a.confusion_tolerance, dc ? &*dc : nullptr);
    write_rvol(cm, out / "confusion.rvol");
    export_confusion_slices(cm, parse_axis(a.axis), out / "confusion");
  }
}

struct EvalArgs {
  std::string config, pred, gt, dontcare, csv, confusion;
  std::string tolerances;
  double confusion_tolerance = -1;
  std::string axis = "z";
};

void run_eval(const EvalArgs& a) {
  RunConfig cfg = config_or_defaults(a.config);
  if (!a.tolerances.empty()) cfg.eval.tolerances = parse_number_list(a.tolerances);
  if (a.confusion_tolerance >= 0) cfg.eval.confusion_tolerance = a.confusion_tolerance;
  cfg.eval.validate();
  const Volume pred = read_rvol(a.pred);
  const Volume gt = read_rvol(a.gt);
  std::optional<Volume> dc;
  if (!a.dontcare.empty()) dc = read_rvol(a.dontcare);
  // Probability maps are binarized at the configured threshold.
  const Volume pred_bin = pred.dtype() == DType::kF32 ? threshold_probabilities(pred, cfg.eval.threshold) : pred;
  const ToleranceReport report = distance_tolerant_prf(pred_bin, gt, cfg.eval.tolerances, dc ? &*dc : nullptr);
  const std::filesystem::path csv = a.csv;
  make_dir(parent_or_cwd(csv));
  json effective = to_json(cfg.eval);
  effective["pred"] = a.pred;
  effective["gt"] = a.gt;
  effective["dontcare"] = a.dontcare;
  effective["csv"] = a.csv;
  effective["confusion"] = a.confusion;
  effective["axis"] = a.axis;
  write_json(effective, parent_or_cwd(csv) / "effective-config.json");
  write_report_csv(report, csv);
  if (!a.confusion.empty()) {
    const Volume cm = confusion_map(pred_bin, gt, cfg.eval.confusion_tolerance, dc ? &*dc : nullptr);
    export_confusion_slices(cm, parse_axis(a.axis), a.confusion);
  }
}

struct SliceArgs {
  std::string input, out, axis = "z";
  std::vector<double> range;
};

void run_slices(const SliceArgs& a) {
  const Volume v = read_rvol(a.input);
  const Axis axis = parse_axis(a.axis);
  make_dir(a.out);
  SliceNormalization norm = SliceNormalization::minmax();
  if (a.range.size() == 2) norm = SliceNormalization::fixed(a.range[0], a.range[1]);
  json effective = {{"input", a.input}, {"axis", a.axis}, {"out", a.out}};
  effective["normalization"] = a.range.size() == 2 ? json(a.range) : json("minmax");
  write_json(effective, std::filesystem::path(a.out) / "effective-config.json");
  const std::int64_t n = v.dims().spatial()[static_cast<int>(axis)];
  for (std::int64_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "slice_%04lld.pgm", static_cast<long long>(i));
    export_slice(v, axis, i, std::filesystem::path(a.out) / name, norm);
  }
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Root/soil segmentation of 3D MRI volumes at twice the input resolution"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic dataset");
  g->add_option("--config", gen.config, "JSON run configuration")->check(CLI::ExistingFile);
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--workers", gen.workers, "Worker threads")->check(CLI::PositiveNumber);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a network");
  t->add_option("--config", tr.config, "JSON run configuration")->check(CLI::ExistingFile);
  t->add_option("--data", tr.data, "Dataset directory (from gen)")->required();
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--workers", tr.workers, "Worker threads")->check(CLI::PositiveNumber);

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "Segment a volume");
  i->add_option("--ckpt", inf.ckpt, "Checkpoint file")->required();
  i->add_option("--input", inf.input, "Input RVOL (1,D,H,W)")->required();
  i->add_option("--out", inf.out, "Output directory")->required();
  i->add_option("--threshold", inf.threshold, "Probability threshold")->capture_default_str();
  i->add_option("--tile", inf.tile, "Tile input size")->capture_default_str();
  i->add_option("--gt", inf.gt, "Ground truth at 2x for a confusion map");
  i->add_option("--dontcare", inf.dontcare, "Don't-care mask at 2x");
  i->add_option("--confusion-tolerance", inf.confusion_tolerance, "Tolerance of the confusion map")
      ->capture_default_str();
  i->add_option("--axis", inf.axis, "Slice axis of the confusion images")->capture_default_str();
  i->add_option("--workers", inf.workers, "Worker threads")->check(CLI::PositiveNumber);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Distance-tolerant precision/recall/F1");
  e->add_option("--config", ev.config, "JSON run configuration (eval section)")->check(CLI::ExistingFile);
  e->add_option("--pred", ev.pred, "Prediction RVOL")->required();
  e->add_option("--gt", ev.gt, "Ground truth RVOL")->required();
  e->add_option("--dontcare", ev.dontcare, "Don't-care RVOL");
  e->add_option("--tolerances", ev.tolerances, "Comma-separated tolerances (default 0,1,2,3,4,5)");
  e->add_option("--csv", ev.csv, "Output CSV")->required();
  e->add_option("--confusion", ev.confusion, "Directory for confusion slices");
  e->add_option("--confusion-tolerance", ev.confusion_tolerance, "Tolerance of the confusion map (default 1)");
  e->add_option("--axis", ev.axis, "Slice axis of the confusion images")->capture_default_str();

  SliceArgs sl;
  auto* s = app.add_subcommand("slices", "Export a volume as PGM slices");
  s->add_option("--input", sl.input, "Input RVOL")->required();
  s->add_option("--axis", sl.axis, "Slice axis: z|y|x or d|h|w")->capture_default_str();
  s->add_option("--out", sl.out, "Output directory")->required();
  s->add_option("--range", sl.range, "Fixed intensity range LO HI (default: volume min/max)")->expected(2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 1;
  }

  try {
    if (*g) run_gen(gen);
    if (*t) run_train(tr);
    if (*i) run_infer(inf);
    if (*e) run_eval(ev);
    if (*s) run_slices(sl);
  } catch (const Error& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace rootseg
