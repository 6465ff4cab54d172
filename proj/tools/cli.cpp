#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "dor/codec.hpp"
#include "dor/data.hpp"
#include "dor/grid.hpp"
#include "dor/net.hpp"
#include "dor/rng.hpp"
#include "dor/train.hpp"

namespace dor::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out;
  bool verbose = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::pair<CorruptionKind, double> parse_corruption(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw UsageError("--corrupt expects kind=magnitude, got '" + spec + "'");
  CorruptionKind kind;
  try {
    kind = parse_corruption_kind(spec.substr(0, eq));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  double m = 0.0;
  try {
    std::size_t used = 0;
    m = std::stod(spec.substr(eq + 1), &used);
    if (used != spec.size() - eq - 1) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw UsageError("--corrupt magnitude is not a number: '" + spec + "'");
  }
  if (!(m >= 0.0 && m <= 1.0)) throw UsageError("--corrupt magnitude must lie in [0,1]: '" + spec + "'");
  return {kind, m};
}

void print_row(std::ostream& out, const char* fmt, auto... args) {
  char line[256];
  std::snprintf(line, sizeof line, fmt, args...);
  out << line;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  std::size_t count = 0;
  std::size_t joints = 14;
  std::size_t size = 224;
  double depth_range = 0.0;
  std::vector<std::string> corrupt;
};

int run_synth(const SynthArgs& a, const Globals& g, std::ostream&, std::ostream& err) {
  if (g.out.empty()) throw UsageError("synth needs --out DIR");
  std::vector<std::pair<CorruptionKind, double>> corruptions;
  for (const auto& c : a.corrupt) corruptions.push_back(parse_corruption(c));
  const ImageGeometry geom(a.size, a.size, a.depth_range > 0.0 ? a.depth_range : static_cast<double>(a.size));
  const SynthConfig cfg = SynthConfig::for_geometry(geom, a.joints);
  const Dataset data = synthesize(cfg, a.count, g.seed.value_or(0), corruptions);
  write_dataset(data, g.out);
  if (g.verbose) err << "wrote " << data.frames.size() << " frames to " << g.out << '\n';
  return kExitOk;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::size_t max_steps = 0;
};

TrainConfig config_or_default(const std::string& path, const Globals& g) {
  TrainConfig cfg = path.empty() ? TrainConfig{} : load_train_config(path);
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

int run_train(const TrainArgs& a, const Globals& g, std::ostream&, std::ostream& err) {
  if (g.out.empty()) throw UsageError("train needs --out DIR");
  TrainConfig cfg = config_or_default(a.config, g);
  if (a.max_steps) cfg.max_steps = a.max_steps;
  const Dataset data = read_dataset(a.data);
  DorNet model(cfg.net_config(data.geom, data.joints));
  TrainOptions opts;
  opts.out_dir = g.out;
  if (g.verbose) {
    opts.on_step = [&err](const StepRecord& r) {
      if (r.step % 10 == 0) print_row(err, "step %zu epoch %zu lr %.3g total %.6g\n", r.step, r.epoch, r.lr, r.loss.total);
    };
  }
  try {
    const TrainResult res = train(model, data, cfg, opts);
    if (g.verbose) err << "trained " << res.steps.size() << " steps; checkpoint in " << g.out << '\n';
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "; last good checkpoint in " << g.out << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string model;
  std::string data;
  double max_threshold = -1.0;
  double threshold_step = 1.0;
};

int run_eval(const EvalArgs& a, const Globals& g, std::ostream& out, std::ostream& err) {
  const DorNet model = load_checkpoint(a.model);
  const Dataset data = read_dataset(a.data);
  const double max = a.max_threshold >= 0.0 ? a.max_threshold : static_cast<double>(data.geom.width()) / 2.0;
  const EvalReport r = evaluate(model, data, success_thresholds(max, a.threshold_step));
  if (g.out.empty()) {
    write_report_csv(r, out);
  } else {
    auto f = open_out(g.out);
    write_report_csv(r, f);
  }
  if (g.verbose) print_row(err, "mean 3D error %.4f over %zu frames\n", r.mean_3d_error, data.frames.size());
  return kExitOk;
}

// --- benchmark -------------------------------------------------------------

struct BenchArgs {
  std::string config;
  std::string data;
  std::size_t train_frames = 64;
  std::size_t eval_frames = 32;
  std::size_t size = 64;
  std::size_t joints = 14;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<std::string> corrupt{"hole_dropout=0.3", "plane_noise=0.3", "edge_blur=0.5"};
};

int run_benchmark(const BenchArgs& a, const Globals& g, std::ostream& out, std::ostream& err) {
  if (a.seeds.size() < 1) throw UsageError("benchmark needs at least one --seeds value");
  const TrainConfig base = config_or_default(a.config, g);
  const std::uint64_t seed = g.seed.value_or(0);
  std::vector<std::pair<CorruptionKind, double>> corruptions;
  for (const auto& c : a.corrupt) corruptions.push_back(parse_corruption(c));

  Dataset train_set;
  if (!a.data.empty()) {
    train_set = read_dataset(a.data);
  } else {
    const ImageGeometry geom(a.size, a.size, static_cast<double>(a.size));
    train_set = synthesize(SynthConfig::for_geometry(geom, a.joints), a.train_frames, seed);
  }
  // Held-out frames come from a disjoint seed stream.
  const SynthConfig eval_cfg = SynthConfig::for_geometry(train_set.geom, train_set.joints);
  const Dataset eval_set = synthesize(eval_cfg, a.eval_frames, derive_seed(seed, 0xE7A1), corruptions);

  BenchmarkOptions opts;
  opts.seeds = a.seeds;
  if (g.verbose) opts.log = [&err](const std::string& m) { err << m << '\n'; };
  const auto rows = benchmark(train_set, eval_set, ablation_matrix(base), opts);
  if (g.out.empty()) {
    write_benchmark_csv(rows, out);
  } else {
    auto f = open_out(g.out);
    write_benchmark_csv(rows, f);
  }
  if (g.verbose) {
    for (const auto& r : rows) {
      if (r.preferred) continue;
      print_row(err, "%s: preferred variant better on %zu of %zu seeds\n", r.axis.c_str(), r.preferred_wins,
                r.compared);
    }
  }
  return kExitOk;
}

// --- decode-demo -----------------------------------------------------------

int run_decode_demo(const std::string& maps_dir, const Globals& g, std::ostream& out, std::ostream& err) {
  const MapsFile f = read_probability_maps(maps_dir);
  const JointSet joints = decode(f.maps, f.grids, f.geom);
  std::ofstream file;
  std::ostream* dst = &out;
  if (!g.out.empty()) {
    file = open_out(g.out);
    dst = &file;
  }
  *dst << "joint,x,y,z\n";
  for (std::size_t a = 0; a < joints.size(); ++a) {
    print_row(*dst, "%zu,%.9g,%.9g,%.9g\n", a, joints[a].x, joints[a].y, joints[a].z);
  }
  if (g.verbose) err << "decoded " << joints.size() << " joints\n";
  return kExitOk;
}

// --- grid-info -------------------------------------------------------------

struct GridArgs {
  std::string axis;
  double extent = 0.0;
  std::size_t count = 0;
  int levels = 0;
  std::string kind;
};

int run_grid_info(const GridArgs& a, std::ostream& out) {
  Axis axis;
  try {
    axis = parse_axis(a.axis);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!(a.extent > 0.0)) throw UsageError("--extent must be positive");
  std::string kind = a.kind;
  if (kind.empty()) kind = a.levels > 0 ? "normal" : "uniform";
  std::optional<DiscretizationGrid> grid;
  if (kind == "normal") {
    if (a.levels <= 0) throw UsageError("a normal grid needs --levels");
    grid = normal_grid(a.extent, a.levels);
  } else if (kind == "uniform") {
    if (a.count == 0) throw UsageError("a uniform grid needs --count");
    grid = uniform_grid(axis, a.extent, a.count);
  } else {
    throw UsageError("--kind must be 'uniform' or 'normal'");
  }
  out << "index,threshold,interval\n";
  for (std::size_t k = 0; k < grid->size(); ++k) {
    print_row(out, "%zu,%.17g,%.17g\n", k, grid->threshold(k), grid->interval(k));
  }
  return kExitOk;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dense ordinal regression for 3D hand keypoints", "dor3d"};
  app.require_subcommand(0, 1);
  Globals g;
  auto add_globals = [&g](CLI::App* a) {
    a->add_option("--seed", g.seed, "Random seed");
    a->add_option("--out", g.out, "Output file or directory");
    a->add_flag("--verbose,-v", g.verbose, "Human-readable summary on stderr");
  };
  add_globals(&app);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic depth dataset");
  synth->add_option("--count", sa.count, "Number of frames")->required()->check(CLI::PositiveNumber);
  synth->add_option("--joints", sa.joints, "Joints per frame")->check(CLI::Range(2, 1000));
  synth->add_option("--size", sa.size, "Frame width and height in pixels")->check(CLI::PositiveNumber);
  synth->add_option("--depth-range", sa.depth_range, "Depth range D (default: --size)");
  synth->add_option("--corrupt", sa.corrupt, "kind=magnitude, repeatable (edge_blur, hole_dropout, plane_noise)");

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train a model on a dataset");
  trn->add_option("--config", ta.config, "JSON training config")->check(CLI::ExistingFile);
  trn->add_option("--data", ta.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  trn->add_option("--max-steps", ta.max_steps, "Stop after this many optimizer steps");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  ev->add_option("--model", ea.model, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--data", ea.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--max-threshold", ea.max_threshold, "Largest success threshold (default W/2)");
  ev->add_option("--threshold-step", ea.threshold_step, "Success threshold spacing")->check(CLI::PositiveNumber);

  BenchArgs ba;
  auto* bench = app.add_subcommand("benchmark", "Run the four-axis ablation table");
  bench->add_option("--config", ba.config, "JSON base training config")->check(CLI::ExistingFile);
  bench->add_option("--data", ba.data, "Training dataset (default: synthesized)")->check(CLI::ExistingDirectory);
  bench->add_option("--train-frames", ba.train_frames, "Synthesized training frames")->check(CLI::PositiveNumber);
  bench->add_option("--eval-frames", ba.eval_frames, "Held-out evaluation frames")->check(CLI::PositiveNumber);
  bench->add_option("--size", ba.size, "Synthesized frame size")->check(CLI::PositiveNumber);
  bench->add_option("--joints", ba.joints, "Synthesized joints per frame")->check(CLI::Range(2, 1000));
  bench->add_option("--seeds", ba.seeds, "Training seeds")->expected(1, 64);
  bench->add_option("--corrupt", ba.corrupt, "Eval-split corruptions, kind=magnitude")->expected(0, 16);

  std::string maps_dir;
  auto* demo = app.add_subcommand("decode-demo", "Decode a probability-map file into joints (CSV)");
  demo->add_option("--maps", maps_dir, "Probability-map directory")->required()->check(CLI::ExistingDirectory);

  GridArgs ga;
  auto* grid = app.add_subcommand("grid-info", "Print grid thresholds and intervals (CSV)");
  grid->add_option("--axis", ga.axis, "x, y or z")->required();
  grid->add_option("--extent", ga.extent, "Axis extent (W, H or D)")->required();
  grid->add_option("--count", ga.count, "Threshold count for a uniform grid");
  grid->add_option("--levels", ga.levels, "Level count for a normal grid")->check(CLI::Range(1, 30));
  grid->add_option("--kind", ga.kind, "uniform or normal");

  for (auto* sub : {synth, trn, ev, bench, demo, grid}) {
    add_globals(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (app.get_subcommands().empty()) {
    err << app.help();
    return kExitUsage;
  }

  try {
    if (*synth) return run_synth(sa, g, out, err);
    if (*trn) return run_train(ta, g, out, err);
    if (*ev) return run_eval(ea, g, out, err);
    if (*bench) return run_benchmark(ba, g, out, err);
    if (*demo) return run_decode_demo(maps_dir, g, out, err);
    if (*grid) return run_grid_info(ga, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"dor3d"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace dor::cli
