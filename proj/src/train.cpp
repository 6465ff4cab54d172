#include "dor/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

#include <json.hpp>

#include "dor/rng.hpp"

namespace dor {

namespace fs = std::filesystem;
using nlohmann::json;
using nn::Tensor;
using nn::Var;

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("TrainConfig: lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("TrainConfig: weight_decay must be non-negative");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("TrainConfig: lr_decay must lie in (0,1]");
  if (decay_every == 0) throw ConfigError("TrainConfig: decay_every must be at least 1");
  if (batch_size == 0) throw ConfigError("TrainConfig: batch_size must be at least 1");
  if (epochs == 0) throw ConfigError("TrainConfig: epochs must be at least 1");
  if (encoder_init != "he" && encoder_init != "std") throw ConfigError("TrainConfig: encoder_init is 'he' or 'std'");
  try {
    loss.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

NetConfig TrainConfig::net_config(const ImageGeometry& geom, std::size_t joints) const {
  NetConfig n;
  n.geom = geom;
  n.joints = joints;
  n.head = head;
  n.z_grid = z_grid;
  n.uvmap = uvmap;
  n.two_logit = two_logit;
  n.stage_channels = stage_channels;
  n.feature_channels = feature_channels;
  n.global_context = global_context;
  n.layer_norm = layer_norm;
  n.context_channels = context_channels;
  n.init_std = init_std;
  n.encoder_init = encoder_init;
  n.seed = seed;
  return n;
}

double TrainConfig::lr_at(std::size_t epoch) const {
  return lr * std::pow(lr_decay, static_cast<double>(epoch / decay_every));
}

namespace {

json config_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"lr_decay", c.lr_decay},
          {"decay_every", c.decay_every},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"max_steps", c.max_steps},
          {"seed", c.seed},
          {"head", to_string(c.head)},
          {"z_grid", c.z_grid == GridKind::Normal ? "normal_z" : "uniform_z"},
          {"uvmap", c.uvmap},
          {"dor_loss", c.dor_loss},
          {"lambda_joint", c.loss.lambda_joint},
          {"lambda_ord", c.loss.lambda_ord},
          {"smooth_l1_beta", c.loss.smooth_l1_beta},
          {"eps", c.loss.eps},
          {"normalize_thresholds", c.loss.normalize_thresholds},
          {"stage_channels", c.stage_channels},
          {"feature_channels", c.feature_channels},
          {"global_context", c.global_context},
          {"layer_norm", c.layer_norm},
          {"context_channels", c.context_channels},
          {"two_logit", c.two_logit},
          {"init_std", c.init_std},
          {"encoder_init", c.encoder_init}};
}

GridKind parse_z_grid(const std::string& s) {
  if (s == "normal_z" || s == "normal") return GridKind::Normal;
  if (s == "uniform_z" || s == "uniform") return GridKind::Uniform;
  throw ConfigError("z_grid must be 'normal_z' or 'uniform_z', got '" + s + "'");
}

}  // namespace

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  TrainConfig c;
  const json known = config_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("train config: unknown key '" + key + "'");
  }
  try {
    auto get = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("lr", c.lr);
    get("weight_decay", c.weight_decay);
    get("lr_decay", c.lr_decay);
    get("decay_every", c.decay_every);
    get("batch_size", c.batch_size);
    get("epochs", c.epochs);
    get("max_steps", c.max_steps);
    get("seed", c.seed);
    if (j.contains("head")) c.head = parse_head_kind(j.at("head").get<std::string>());
    if (j.contains("z_grid")) c.z_grid = parse_z_grid(j.at("z_grid").get<std::string>());
    get("uvmap", c.uvmap);
    get("dor_loss", c.dor_loss);
    get("lambda_joint", c.loss.lambda_joint);
    get("lambda_ord", c.loss.lambda_ord);
    get("smooth_l1_beta", c.loss.smooth_l1_beta);
    get("eps", c.loss.eps);
    get("normalize_thresholds", c.loss.normalize_thresholds);
    get("stage_channels", c.stage_channels);
    get("feature_channels", c.feature_channels);
    get("global_context", c.global_context);
    get("layer_norm", c.layer_norm);
    get("context_channels", c.context_channels);
    get("two_logit", c.two_logit);
    get("init_std", c.init_std);
    get("encoder_init", c.encoder_init);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string to_json(const TrainConfig& cfg) { return config_json(cfg).dump(2); }

TrainConfig load_train_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return train_config_from_json(text);
}

// ---------------------------------------------------------------------------
// Optimizer

NonFiniteGradientError::NonFiniteGradientError(const std::string& param)
    : std::runtime_error("non-finite gradient in " + param), param_(param) {}

DivergenceError::DivergenceError(std::size_t step, const std::string& detail)
    : std::runtime_error("training diverged at step " + std::to_string(step) + ": " + detail), step_(step) {}

void adamw_step(std::vector<double>& param, const std::vector<double>& grad, AdamState& state, double lr,
                const AdamWConfig& cfg, const std::string& name) {
  if (param.size() != grad.size()) {
    throw std::invalid_argument("adamw_step: " + name + " has " + std::to_string(param.size()) +
                                " values but " + std::to_string(grad.size()) + " gradients");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw NonFiniteGradientError(name);
  }
  if (state.m.size() != param.size()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
    state.t = 0;
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    param[i] = param[i] * decay - lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

AdamW::AdamW(std::vector<NamedParameter>& params, AdamWConfig cfg)
    : params_(&params), cfg_(cfg), state_(params.size()) {}

void AdamW::step(double lr) {
  for (auto& p : *params_) {
    if (!p.var.mutable_grad().all_finite()) throw NonFiniteGradientError(p.name);
  }
  for (std::size_t i = 0; i < params_->size(); ++i) {
    NamedParameter& p = (*params_)[i];
    adamw_step(p.var.mutable_value().values(), p.var.mutable_grad().values(), state_[i], lr, cfg_, p.name);
  }
  ++steps_;
}

// ---------------------------------------------------------------------------
// Batches

Tensor make_input(const std::vector<const DepthFrame*>& frames, const ImageGeometry& geom, bool uvmap) {
  const std::size_t c = uvmap ? 3 : 1;
  const std::size_t per = geom.height() * geom.width() * c;
  Tensor out({frames.size(), geom.height(), geom.width(), c}, 0.0);
  const UVMap uv(geom);
  for (std::size_t n = 0; n < frames.size(); ++n) {
    const Tensor t = uvmap ? augment_input(frames[n]->depth, uv, geom) : depth_only_input(frames[n]->depth, geom);
    std::copy(t.values().begin(), t.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(n * per));
  }
  return out;
}

namespace {

struct Sample {
  Tensor input;  // [H, W, C]
  ProbabilityMaps gt_maps;
  JointSet joints;
};

struct Batch {
  Tensor input, joints, gt_x, gt_y, gt_z;
};

Batch assemble(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx, bool need_maps) {
  const std::size_t n = idx.size();
  const Sample& first = samples[idx[0]];
  nn::Shape in_shape{n};
  in_shape.insert(in_shape.end(), first.input.shape().begin(), first.input.shape().end());
  Batch b;
  b.input = Tensor(in_shape, 0.0);
  const std::size_t a = first.joints.size();
  b.joints = Tensor({n, a, 3}, 0.0);
  const MapDims& d = first.gt_maps.dims;
  if (need_maps) {
    b.gt_x = Tensor({n, d.rows, d.kx, d.joints}, 0.0);
    b.gt_y = Tensor({n, d.ky, d.cols, d.joints}, 0.0);
    b.gt_z = Tensor({n, d.rows, d.cols, d.kz, d.joints}, 0.0);
  }
  for (std::size_t k = 0; k < n; ++k) {
    const Sample& s = samples[idx[k]];
    const auto& v = s.input.values();
    std::copy(v.begin(), v.end(), b.input.values().begin() + static_cast<std::ptrdiff_t>(k * v.size()));
    for (std::size_t j = 0; j < a; ++j) {
      b.joints[(k * a + j) * 3 + 0] = s.joints[j].x;
      b.joints[(k * a + j) * 3 + 1] = s.joints[j].y;
      b.joints[(k * a + j) * 3 + 2] = s.joints[j].z;
    }
    if (need_maps) {
      auto put = [k](Tensor& dst, const std::vector<double>& src) {
        std::copy(src.begin(), src.end(), dst.values().begin() + static_cast<std::ptrdiff_t>(k * src.size()));
      };
      put(b.gt_x, s.gt_maps.x);
      put(b.gt_y, s.gt_maps.y);
      put(b.gt_z, s.gt_maps.z);
    }
  }
  return b;
}

std::vector<Tensor> snapshot(const std::vector<NamedParameter>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.var.value());
  return out;
}

void restore(std::vector<NamedParameter>& params, const std::vector<Tensor>& saved) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].var.mutable_value() = saved[i];
}

void finish(const DorNet& model, const std::vector<StepRecord>& steps, const TrainOptions& opts) {
  if (opts.out_dir.empty()) return;
  save_checkpoint(model, opts.out_dir);
  std::ofstream csv(opts.out_dir / "loss.csv");
  if (!csv) throw std::runtime_error("cannot write " + (opts.out_dir / "loss.csv").string());
  write_loss_csv(steps, csv);
}

}  // namespace

void write_loss_csv(const std::vector<StepRecord>& steps, std::ostream& out) {
  out << "step,joint,ord_x,ord_y,ord_z,total\n";
  char line[256];
  for (const auto& s : steps) {
    std::snprintf(line, sizeof line, "%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n", s.step, s.loss.joint, s.loss.ord_x,
                  s.loss.ord_y, s.loss.ord_z, s.loss.total);
    out << line;
  }
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult train(DorNet& model, const Dataset& data, const TrainConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  if (data.frames.empty()) throw std::invalid_argument("train: dataset is empty");
  const NetConfig& net = model.config();
  if (!(net.geom == data.geom) || net.joints != data.joints) {
    throw std::invalid_argument("train: model geometry or joint count does not match the dataset");
  }
  const bool ordinal = net.head == HeadKind::Ordinal;
  const bool use_dor = ordinal && cfg.dor_loss;
  LossConfig loss_cfg = cfg.loss;
  if (!use_dor) loss_cfg.lambda_ord = 0.0;

  std::vector<Sample> samples(data.frames.size());
  {
    const UVMap uv(data.geom);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const DepthFrame& f = data.frames[i];
      samples[i].input = net.uvmap ? augment_input(f.depth, uv, data.geom) : depth_only_input(f.depth, data.geom);
      samples[i].joints = f.joints;
      if (use_dor) samples[i].gt_maps = encode_gt(f.joints, model.grids(), data.geom);
    }
  }

  AdamW opt(model.parameters(), AdamWConfig{0.9, 0.999, 1e-8, cfg.weight_decay});
  TrainResult result;
  std::vector<std::size_t> order(samples.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng(derive_seed(cfg.seed, epoch)).shuffle(order.begin(), order.end());
    const double lr = cfg.lr_at(epoch);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      if (cfg.max_steps != 0 && step >= cfg.max_steps) break;
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(order.size(), begin + cfg.batch_size)));
      const Batch b = assemble(samples, idx, use_dor);
      const std::vector<Tensor> saved = snapshot(model.parameters());
      auto diverge = [&](const std::string& why) {
        restore(model.parameters(), saved);
        finish(model, result.steps, opts);
        throw DivergenceError(step, why);
      };

      StepRecord rec{step, epoch, lr, {}};
      try {
        for (auto& p : model.parameters()) p.var.zero_grad();
        const NetOutput out = model.forward(nn::constant(b.input));
        const Var jl = joint_loss(out.joints, b.joints, loss_cfg);
        TotalLoss tl;
        if (use_dor) {
          const OrdinalTerms ot = dor_loss(out.prob_x, out.prob_y, out.prob_z, b.gt_x, b.gt_y, b.gt_z, loss_cfg);
          tl = total_loss(jl, &ot, loss_cfg);
        } else {
          tl = total_loss(jl, nullptr, loss_cfg);
        }
        rec.loss = tl.breakdown;
        if (!std::isfinite(rec.loss.total)) diverge("loss is not finite");
        tl.total.backward();
        opt.step(lr);
      } catch (const nn::NonFiniteError& e) {
        diverge(e.what());
      } catch (const NonFiniteGradientError& e) {
        diverge(e.what());
      }
      result.steps.push_back(rec);
      if (opts.on_step) opts.on_step(rec);
      ++step;
    }
    if (cfg.max_steps != 0 && step >= cfg.max_steps) break;
  }
  finish(model, result.steps, opts);
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<double> success_thresholds(double max, double step) {
  if (!(step > 0.0) || !(max >= 0.0)) throw std::invalid_argument("success_thresholds: need step > 0, max >= 0");
  std::vector<double> out;
  for (std::size_t i = 0;; ++i) {
    const double t = static_cast<double>(i) * step;
    if (t > max + 1e-9 * step) break;
    out.push_back(t);
  }
  return out;
}

EvalReport evaluate_predictions(const std::vector<JointSet>& pred, const std::vector<JointSet>& gt,
                                const std::vector<double>& thresholds) {
  if (gt.empty()) throw std::invalid_argument("evaluate: dataset is empty");
  if (pred.size() != gt.size()) throw std::invalid_argument("evaluate: prediction count does not match frames");
  const std::size_t a = gt.front().size();
  if (a == 0) throw std::invalid_argument("evaluate: frames carry no joints");
  EvalReport r;
  r.per_joint_error.assign(a, 0.0);
  std::vector<double> worst(gt.size(), 0.0);
  for (std::size_t f = 0; f < gt.size(); ++f) {
    if (pred[f].size() != a || gt[f].size() != a) throw std::invalid_argument("evaluate: joint count mismatch");
    for (std::size_t j = 0; j < a; ++j) {
      const double dx = pred[f][j].x - gt[f][j].x;
      const double dy = pred[f][j].y - gt[f][j].y;
      const double dz = pred[f][j].z - gt[f][j].z;
      const double e = std::sqrt(dx * dx + dy * dy + dz * dz);
      r.per_joint_error[j] += e;
      r.x_error += std::abs(dx);
      r.y_error += std::abs(dy);
      r.z_error += std::abs(dz);
      worst[f] = std::max(worst[f], e);
    }
  }
  const double frames = static_cast<double>(gt.size());
  const double total = frames * static_cast<double>(a);
  double sum = 0.0;
  for (double& e : r.per_joint_error) {
    sum += e;
    e /= frames;
  }
  r.mean_3d_error = sum / total;
  r.x_error /= total;
  r.y_error /= total;
  r.z_error /= total;
  std::vector<double> sorted = thresholds;
  std::sort(sorted.begin(), sorted.end());
  for (double t : sorted) {
    const auto hits = std::count_if(worst.begin(), worst.end(), [t](double w) { return w < t; });
    r.success_curve.emplace_back(t, static_cast<double>(hits) / frames);
  }
  return r;
}

std::vector<JointSet> predict(const DorNet& model, const Dataset& data, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("predict: batch_size must be at least 1");
  const nn::NoGradGuard no_grad;
  const std::size_t a = model.config().joints;
  std::vector<JointSet> out;
  out.reserve(data.frames.size());
  for (std::size_t begin = 0; begin < data.frames.size(); begin += batch_size) {
    std::vector<const DepthFrame*> frames;
    for (std::size_t i = begin; i < std::min(data.frames.size(), begin + batch_size); ++i) {
      frames.push_back(&data.frames[i]);
    }
    const Tensor in = make_input(frames, data.geom, model.config().uvmap);
    const Tensor j = model.forward(nn::constant(in)).joints.value();
    for (std::size_t n = 0; n < frames.size(); ++n) {
      JointSet s(a);
      for (std::size_t k = 0; k < a; ++k) s[k] = {j[(n * a + k) * 3], j[(n * a + k) * 3 + 1], j[(n * a + k) * 3 + 2]};
      out.push_back(std::move(s));
    }
  }
  return out;
}

EvalReport evaluate(const DorNet& model, const Dataset& data, const std::vector<double>& thresholds) {
  if (data.frames.empty()) throw std::invalid_argument("evaluate: dataset is empty");
  if (!(model.config().geom == data.geom) || model.config().joints != data.joints) {
    throw std::invalid_argument("evaluate: model geometry or joint count does not match the dataset");
  }
  std::vector<JointSet> gt;
  gt.reserve(data.frames.size());
  for (const auto& f : data.frames) gt.push_back(f.joints);
  return evaluate_predictions(predict(model, data), gt, thresholds);
}

void write_report_csv(const EvalReport& r, std::ostream& out) {
  char line[160];
  out << "metric,key,value\n";
  auto row = [&](const char* metric, const std::string& key, double v) {
    std::snprintf(line, sizeof line, "%s,%s,%.10g\n", metric, key.c_str(), v);
    out << line;
  };
  row("mean_3d_error", "", r.mean_3d_error);
  row("axis_error", "x", r.x_error);
  row("axis_error", "y", r.y_error);
  row("axis_error", "z", r.z_error);
  for (std::size_t j = 0; j < r.per_joint_error.size(); ++j) row("joint_error", std::to_string(j), r.per_joint_error[j]);
  for (const auto& [t, f] : r.success_curve) {
    char key[32];
    std::snprintf(key, sizeof key, "%g", t);
    row("success", key, f);
  }
}

// ---------------------------------------------------------------------------
// Ablation benchmark

std::vector<BenchmarkVariant> ablation_matrix(const TrainConfig& base) {
  std::vector<BenchmarkVariant> v;
  TrainConfig full = base;
  full.head = HeadKind::Ordinal;
  full.z_grid = GridKind::Normal;
  full.uvmap = true;
  full.dor_loss = true;
  auto from_full = [&full](auto edit) {
    TrainConfig c = full;
    edit(c);
    return c;
  };
  v.push_back({"head", "ordinal", true, full});
  v.push_back({"head", "offset", false, from_full([](TrainConfig& c) { c.head = HeadKind::Offset; })});
  v.push_back({"z_grid", "normal_z", true, full});
  v.push_back({"z_grid", "uniform_z", false, from_full([](TrainConfig& c) { c.z_grid = GridKind::Uniform; })});
  v.push_back({"uvmap", "on", true, full});
  v.push_back({"uvmap", "off", false, from_full([](TrainConfig& c) { c.uvmap = false; })});
  v.push_back({"dor_loss", "on", true, full});
  v.push_back({"dor_loss", "off", false, from_full([](TrainConfig& c) { c.dor_loss = false; })});
  return v;
}

namespace {

Spread spread_of(const std::vector<double>& xs) {
  Spread s;
  if (xs.empty()) {
    s.mean = s.spread = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.spread = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

struct RunOutcome {
  bool failed = false;
  EvalReport report;
};

}  // namespace

std::vector<BenchmarkRow> benchmark(const Dataset& train_set, const Dataset& eval_set,
                                    const std::vector<BenchmarkVariant>& variants, const BenchmarkOptions& opts) {
  if (variants.size() < 2) throw std::invalid_argument("benchmark: need at least two configs");
  if (opts.seeds.empty()) throw std::invalid_argument("benchmark: need at least one seed");
  if (train_set.frames.empty() || eval_set.frames.empty()) throw std::invalid_argument("benchmark: empty split");
  if (!(train_set.geom == eval_set.geom) || train_set.joints != eval_set.joints) {
    throw std::invalid_argument("benchmark: train and eval splits disagree on geometry or joints");
  }
  const std::vector<double> thresholds =
      opts.thresholds.empty() ? success_thresholds(static_cast<double>(train_set.geom.width()) / 2.0, 1.0)
                              : opts.thresholds;

  // Identical configs (e.g. the shared full model) are trained once per seed.
  std::map<std::pair<std::string, std::uint64_t>, RunOutcome> runs;
  auto run = [&](const TrainConfig& base, std::uint64_t seed, const std::string& label) -> const RunOutcome& {
    TrainConfig cfg = base;
    cfg.seed = seed;
    const auto key = std::make_pair(to_json(cfg), seed);
    if (auto it = runs.find(key); it != runs.end()) return it->second;
    RunOutcome o;
    try {
      DorNet model(cfg.net_config(train_set.geom, train_set.joints));
      train(model, train_set, cfg);
      o.report = evaluate(model, eval_set, thresholds);
      if (!std::isfinite(o.report.mean_3d_error)) o.failed = true;
    } catch (const DivergenceError& e) {
      o.failed = true;
      if (opts.log) opts.log(label + ": " + e.what());
    }
    if (opts.log) {
      char msg[200];
      std::snprintf(msg, sizeof msg, "%s seed %llu: %s %.4f", label.c_str(), static_cast<unsigned long long>(seed),
                    o.failed ? "failed" : "mean_3d_error", o.failed ? 0.0 : o.report.mean_3d_error);
      opts.log(msg);
    }
    return runs.emplace(key, std::move(o)).first->second;
  };

  std::vector<BenchmarkRow> rows;
  for (const auto& v : variants) {
    BenchmarkRow row;
    row.axis = v.axis;
    row.variant = v.name;
    row.preferred = v.preferred;
    row.seeds = opts.seeds.size();
    std::vector<double> xs, ys, zs, avgs, m3;
    for (std::uint64_t seed : opts.seeds) {
      const RunOutcome& o = run(v.cfg, seed, v.axis + "/" + v.name);
      if (o.failed) {
        ++row.failed;
        row.per_seed_error.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      const EvalReport& r = o.report;
      xs.push_back(r.x_error);
      ys.push_back(r.y_error);
      zs.push_back(r.z_error);
      avgs.push_back((r.x_error + r.y_error + r.z_error) / 3.0);
      m3.push_back(r.mean_3d_error);
      row.per_seed_error.push_back(r.mean_3d_error);
    }
    row.x = spread_of(xs);
    row.y = spread_of(ys);
    row.z = spread_of(zs);
    row.avg = spread_of(avgs);
    row.mean_3d = spread_of(m3);
    rows.push_back(std::move(row));
  }

  // Seed-wise ordering of each axis: preferred row against every other row.
  for (auto& row : rows) {
    const auto pref = std::find_if(rows.begin(), rows.end(), [&row](const BenchmarkRow& r) {
      return r.axis == row.axis && r.preferred;
    });
    if (pref == rows.end()) continue;
    const BenchmarkRow* others = nullptr;
    if (row.preferred) {
      for (const auto& r : rows) {
        if (r.axis == row.axis && !r.preferred) others = &r;
      }
    } else {
      others = &*pref;
    }
    if (!others) continue;
    const BenchmarkRow& p = row.preferred ? row : *others;
    const BenchmarkRow& q = row.preferred ? *others : row;
    for (std::size_t s = 0; s < opts.seeds.size(); ++s) {
      const double ep = p.per_seed_error[s], eq = q.per_seed_error[s];
      if (std::isnan(ep) || std::isnan(eq)) continue;
      ++row.compared;
      if (ep < eq) ++row.preferred_wins;
    }
  }
  return rows;
}

void write_benchmark_csv(const std::vector<BenchmarkRow>& rows, std::ostream& out) {
  out << "axis,variant,preferred,seeds,failed,x_mean,x_spread,y_mean,y_spread,z_mean,z_spread,avg_mean,avg_spread,"
         "mean3d_mean,mean3d_spread,preferred_wins,compared\n";
  char line[512];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line,
                  "%s,%s,%d,%zu,%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%zu,%zu\n", r.axis.c_str(),
                  r.variant.c_str(), r.preferred ? 1 : 0, r.seeds, r.failed, r.x.mean, r.x.spread, r.y.mean,
                  r.y.spread, r.z.mean, r.z.spread, r.avg.mean, r.avg.spread, r.mean_3d.mean, r.mean_3d.spread,
                  r.preferred_wins, r.compared);
    out << line;
  }
}

}  // namespace dor
