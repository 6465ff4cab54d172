#include "dor/net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "dor/blob_io.hpp"
#include "dor/rng.hpp"

namespace dor {

using nn::Shape;
using nn::Tensor;
using nn::Var;

std::string to_string(HeadKind kind) { return kind == HeadKind::Ordinal ? "ordinal" : "offset"; }

HeadKind parse_head_kind(const std::string& s) {
  if (s == "ordinal") return HeadKind::Ordinal;
  if (s == "offset") return HeadKind::Offset;
  throw std::invalid_argument("unknown head kind '" + s + "'");
}

std::size_t HeadConfig::x_channels(const ImageGeometry& geom) const {
  return kx * joints / geom.feature_width() * logits();
}

std::size_t HeadConfig::y_channels(const ImageGeometry& geom) const {
  return ky * joints / geom.feature_height() * logits();
}

void HeadConfig::validate(const ImageGeometry& geom) const {
  if (kx < 2 || ky < 2 || kz < 2 || joints == 0) {
    throw ConfigError("HeadConfig: threshold counts must be >= 2 and joints > 0");
  }
  if ((kx * joints) % geom.feature_width() != 0) {
    throw ConfigError("HeadConfig: K_x*A = " + std::to_string(kx * joints) +
                      " not divisible by W/s = " + std::to_string(geom.feature_width()));
  }
  if ((ky * joints) % geom.feature_height() != 0) {
    throw ConfigError("HeadConfig: K_y*A = " + std::to_string(ky * joints) +
                      " not divisible by H/s = " + std::to_string(geom.feature_height()));
  }
}

DorNet::DorNet(NetConfig cfg) : cfg_(std::move(cfg)), grids_(default_grids(cfg_.geom, cfg_.z_grid)) {
  const std::size_t stride = cfg_.geom.stride();
  if (!std::has_single_bit(stride) || std::countr_zero(stride) != static_cast<int>(cfg_.stage_channels.size())) {
    throw ConfigError("NetConfig: need one stride-2 stage per factor of two in stride " +
                      std::to_string(stride) + ", got " + std::to_string(cfg_.stage_channels.size()));
  }
  if (cfg_.joints == 0 || cfg_.feature_channels == 0 || (cfg_.global_context && cfg_.context_channels == 0)) {
    throw ConfigError("NetConfig: zero joints/channels");
  }
  if (cfg_.encoder_init != "he" && cfg_.encoder_init != "std") {
    throw ConfigError("NetConfig: encoder_init must be 'he' or 'std'");
  }
  if (cfg_.head == HeadKind::Ordinal) head_config().validate(cfg_.geom);

  std::size_t cin = cfg_.input_channels();
  for (std::size_t s = 0; s < cfg_.stage_channels.size(); ++s) {
    const std::size_t cout = cfg_.stage_channels[s];
    add_param("enc." + std::to_string(s) + ".w", {3, 3, cin, cout});
    add_param("enc." + std::to_string(s) + ".b", {cout});
    if (cfg_.layer_norm) {
      add_param("enc." + std::to_string(s) + ".gamma", {cout});
      add_param("enc." + std::to_string(s) + ".beta", {cout});
    }
    cin = cout;
  }
  const std::size_t ctx = cfg_.global_context ? cin + cfg_.context_channels : cin;
  if (cfg_.global_context) {
    add_param("ctx.w", {cfg_.geom.feature_height() * cfg_.geom.feature_width() * cin, cfg_.context_channels});
    add_param("ctx.b", {cfg_.context_channels});
  }
  const std::size_t cf = cfg_.feature_channels;
  add_param("feat_xy.w", {1, 1, ctx, cf});
  add_param("feat_xy.b", {cf});
  add_param("feat_z.w", {1, 1, ctx, cf});
  add_param("feat_z.b", {cf});

  if (cfg_.head == HeadKind::Ordinal) {
    const HeadConfig h = head_config();
    add_param("head_x.w", {1, 1, cf, h.x_channels(cfg_.geom)});
    add_param("head_x.b", {h.x_channels(cfg_.geom)});
    add_param("head_y.w", {1, 1, cf, h.y_channels(cfg_.geom)});
    add_param("head_y.b", {h.y_channels(cfg_.geom)});
    add_param("head_z.w", {1, 1, cf, h.z_channels()});
    add_param("head_z.b", {h.z_channels()});
  } else {
    add_param("offset_xy.w", {1, 1, cf, cfg_.joints * 3});
    add_param("offset_xy.b", {cfg_.joints * 3});
    add_param("offset_z.w", {1, 1, cf, cfg_.joints});
    add_param("offset_z.b", {cfg_.joints});
  }

  Rng rng(cfg_.seed);
  // Initialized in declaration order from one stream so a seed fixes every weight.
  for (auto& p : params_) {
    if (p.name.ends_with(".b") || p.name.ends_with(".beta")) continue;
    if (p.name.ends_with(".gamma")) {
      p.var.mutable_value().fill(1.0);
      continue;
    }
    const std::string stage = p.name.substr(0, p.name.size() - 2);
    const Tensor& w = p.var.value();
    double std = cfg_.init_std;
    if (cfg_.encoder_init == "he" && stage == "ctx") {
      std = std::sqrt(2.0 / static_cast<double>(w.dim(0)));
    } else if (cfg_.encoder_init == "he" && (stage.starts_with("enc.") || stage.starts_with("feat_"))) {
      const std::size_t fan_in = w.dim(0) * w.dim(1) * w.dim(2);
      std = std::sqrt(2.0 / static_cast<double>(fan_in));
    }
    for (auto& v : p.var.mutable_value().values()) v = rng.truncated_normal(std);
  }
}

Var& DorNet::add_param(const std::string& name, Shape shape) {
  params_.push_back({name, nn::parameter(Tensor(std::move(shape), 0.0))});
  return params_.back().var;
}

std::size_t DorNet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw std::out_of_range("no parameter named '" + name + "'");
}

Var& DorNet::param(const std::string& name) { return params_[index_of(name)].var; }
const Var& DorNet::param(const std::string& name) const { return params_[index_of(name)].var; }

std::size_t DorNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var.value().size();
  return n;
}

HeadConfig DorNet::head_config() const {
  return {grids_.x.size(), grids_.y.size(), grids_.z.size(), cfg_.joints, cfg_.two_logit};
}

FeatureMaps DorNet::encode(const Var& input) const {
  const Shape& s = input.shape();
  if (s.size() != 4 || s[1] != cfg_.geom.height() || s[2] != cfg_.geom.width() ||
      s[3] != cfg_.input_channels()) {
    throw nn::ShapeError("encoder", "input " + nn::to_string(s) + " does not match geometry " +
                                        std::to_string(cfg_.geom.height()) + "x" +
                                        std::to_string(cfg_.geom.width()) + "x" +
                                        std::to_string(cfg_.input_channels()));
  }
  Var h = input;
  for (std::size_t st = 0; st < cfg_.stage_channels.size(); ++st) {
    const std::string p = "enc." + std::to_string(st);
    h = nn::conv2d(h, param(p + ".w"), param(p + ".b"), 2, 1);
    if (cfg_.layer_norm) h = nn::add(nn::mul(nn::layer_norm(h), param(p + ".gamma")), param(p + ".beta"));
    h = nn::relu(h);
  }
  if (cfg_.global_context) {
    const Shape hs = h.shape();
    Var g = nn::reshape(h, {hs[0], hs[1] * hs[2] * hs[3]});
    g = nn::relu(nn::add(nn::matmul(g, param("ctx.w")), param("ctx.b")));
    g = nn::reshape(g, {hs[0], 1, 1, cfg_.context_channels});
    h = nn::concat_last({h, nn::broadcast_to(g, {hs[0], hs[1], hs[2], cfg_.context_channels})});
  }
  FeatureMaps f;
  f.xy = nn::relu(nn::conv2d(h, param("feat_xy.w"), param("feat_xy.b"), 1, 0));
  f.z = nn::relu(nn::conv2d(h, param("feat_z.w"), param("feat_z.b"), 1, 0));
  return f;
}

namespace {

// Last axis holds the binary logits (or a single logit); returns P(greater).
Var binary_probability(const Var& logits, bool two_logit) {
  if (two_logit) return nn::select_last(nn::softmax(logits), 1);
  return nn::sigmoid(nn::select_last(logits, 0));
}

}  // namespace

std::pair<Var, Var> DorNet::ordinal_head_xy(const FeatureMaps& f) const {
  if (cfg_.head != HeadKind::Ordinal) throw ConfigError("ordinal_head_xy on an offset model");
  const HeadConfig hc = head_config();
  const std::size_t n = f.xy.shape().at(0);
  const std::size_t rows = cfg_.geom.feature_height(), cols = cfg_.geom.feature_width();
  const std::size_t a = hc.joints, l = hc.logits();

  // Row i keeps its own classifiers; (column, channel) merge into (joint, threshold, logit).
  Var ox = nn::conv2d(f.xy, param("head_x.w"), param("head_x.b"), 1, 0);
  ox = nn::reshape(ox, {n, rows, a, hc.kx, l});
  Var prob_x = nn::permute(binary_probability(ox, hc.two_logit), {0, 1, 3, 2});

  Var oy = nn::conv2d(f.xy, param("head_y.w"), param("head_y.b"), 1, 0);
  oy = nn::permute(oy, {0, 2, 1, 3});  // [N, W/s, H/s, C]
  oy = nn::reshape(oy, {n, cols, a, hc.ky, l});
  Var prob_y = nn::permute(binary_probability(oy, hc.two_logit), {0, 3, 1, 2});
  return {prob_x, prob_y};
}

Var DorNet::ordinal_head_z(const FeatureMaps& f) const {
  if (cfg_.head != HeadKind::Ordinal) throw ConfigError("ordinal_head_z on an offset model");
  const HeadConfig hc = head_config();
  const std::size_t n = f.z.shape().at(0);
  Var oz = nn::conv2d(f.z, param("head_z.w"), param("head_z.b"), 1, 0);
  oz = nn::reshape(oz, {n, cfg_.geom.feature_height(), cfg_.geom.feature_width(), hc.joints, hc.kz,
                        hc.logits()});
  return nn::permute(binary_probability(oz, hc.two_logit), {0, 1, 2, 4, 3});
}

Var DorNet::offset_head(const FeatureMaps& f) const {
  if (cfg_.head != HeadKind::Offset) throw ConfigError("offset_head on an ordinal model");
  const std::size_t n = f.xy.shape().at(0);
  const std::size_t rows = cfg_.geom.feature_height(), cols = cfg_.geom.feature_width();
  const std::size_t positions = rows * cols, a = cfg_.joints;
  if (f.z.shape() != f.xy.shape()) {
    throw nn::ShapeError("offset_head", nn::to_string(f.xy.shape()) + " vs " + nn::to_string(f.z.shape()));
  }

  Var oxy = nn::reshape(nn::conv2d(f.xy, param("offset_xy.w"), param("offset_xy.b"), 1, 0),
                        {n, positions, a, 3});
  Var oz = nn::reshape(nn::conv2d(f.z, param("offset_z.w"), param("offset_z.b"), 1, 0),
                       {n, positions, a, 1});

  // Softmax over positions, per joint.
  Var logits = nn::permute(nn::select_last(oxy, 2), {0, 2, 1});
  Var weights = nn::reshape(nn::permute(nn::softmax(logits), {0, 2, 1}), {n, positions, a, 1});

  auto column = [&](std::size_t c) { return nn::reshape(nn::select_last(oxy, c), {n, positions, a, 1}); };
  Var offsets = nn::concat_last({column(0), column(1), oz});

  // Offsets are predicted in half-extent units.
  const double s = static_cast<double>(cfg_.geom.stride());
  Tensor unit({3}, std::vector<double>{cfg_.geom.width() / 2.0, cfg_.geom.height() / 2.0,
                                       cfg_.geom.depth_range() / 2.0});
  Tensor anchors({positions, 1, 3});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t p = r * cols + c;
      anchors.at({p, 0, 0}) = (static_cast<double>(c) + 0.5) * s;
      anchors.at({p, 0, 1}) = (static_cast<double>(r) + 0.5) * s;
      anchors.at({p, 0, 2}) = cfg_.geom.depth_range() / 2.0;
    }
  }
  Var targets = nn::add(nn::mul(offsets, nn::constant(unit)), nn::constant(anchors));
  return nn::reduce_sum(nn::mul(targets, weights), {1});
}

NetOutput DorNet::forward(const Var& input) const {
  const FeatureMaps f = encode(input);
  NetOutput out;
  if (cfg_.head == HeadKind::Ordinal) {
    std::tie(out.prob_x, out.prob_y) = ordinal_head_xy(f);
    out.prob_z = ordinal_head_z(f);
    out.joints = soft_decode(out.prob_x, out.prob_y, out.prob_z, grids_);
  } else {
    out.joints = offset_head(f);
  }
  return out;
}

Var soft_decode(const Var& prob_x, const Var& prob_y, const Var& prob_z, const GridSet& grids) {
  const Shape& sx = prob_x.shape();
  const Shape& sy = prob_y.shape();
  const Shape& sz = prob_z.shape();
  if (sx.size() != 4 || sy.size() != 4 || sz.size() != 5 || sx[2] != grids.x.size() ||
      sy[1] != grids.y.size() || sz[3] != grids.z.size() || sx[0] != sy[0] || sx[0] != sz[0] ||
      sx[3] != sy[3] || sx[3] != sz[4]) {
    throw nn::ShapeError("soft_decode", nn::to_string(sx) + ", " + nn::to_string(sy) + ", " +
                                            nn::to_string(sz));
  }
  const std::size_t n = sx[0], a = sx[3];
  auto lengths = [](const DiscretizationGrid& g, Shape shape) {
    return nn::constant(Tensor(std::move(shape), std::vector<double>(g.intervals().begin(), g.intervals().end())));
  };
  Var x = nn::reduce_mean(nn::reduce_sum(nn::mul(prob_x, lengths(grids.x, {grids.x.size(), 1})), {2}), {1});
  Var y = nn::reduce_mean(nn::reduce_sum(nn::mul(prob_y, lengths(grids.y, {grids.y.size(), 1, 1})), {1}), {1});
  Var z = nn::reduce_mean(nn::reduce_sum(nn::mul(prob_z, lengths(grids.z, {grids.z.size(), 1})), {3}), {1, 2});
  return nn::concat_last({nn::reshape(x, {n, a, 1}), nn::reshape(y, {n, a, 1}), nn::reshape(z, {n, a, 1})});
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr int kCheckpointVersion = 1;

nlohmann::json config_to_json(const NetConfig& c) {
  return {
      {"width", c.geom.width()},
      {"height", c.geom.height()},
      {"depth_range", c.geom.depth_range()},
      {"stride", c.geom.stride()},
      {"joints", c.joints},
      {"head", to_string(c.head)},
      {"z_grid", to_string(c.z_grid)},
      {"uvmap", c.uvmap},
      {"two_logit", c.two_logit},
      {"stage_channels", c.stage_channels},
      {"feature_channels", c.feature_channels},
      {"global_context", c.global_context},
      {"layer_norm", c.layer_norm},
      {"context_channels", c.context_channels},
      {"init_std", c.init_std},
      {"encoder_init", c.encoder_init},
      {"seed", c.seed},
  };
}

NetConfig config_from_json(const nlohmann::json& j) {
  NetConfig c;
  c.geom = ImageGeometry(j.at("width").get<std::size_t>(), j.at("height").get<std::size_t>(),
                         j.at("depth_range").get<double>(), j.at("stride").get<std::size_t>());
  c.joints = j.at("joints").get<std::size_t>();
  c.head = parse_head_kind(j.at("head").get<std::string>());
  c.z_grid = parse_grid_kind(j.at("z_grid").get<std::string>());
  c.uvmap = j.at("uvmap").get<bool>();
  c.two_logit = j.at("two_logit").get<bool>();
  c.stage_channels = j.at("stage_channels").get<std::vector<std::size_t>>();
  c.feature_channels = j.at("feature_channels").get<std::size_t>();
  c.global_context = j.at("global_context").get<bool>();
  c.layer_norm = j.at("layer_norm").get<bool>();
  c.context_channels = j.at("context_channels").get<std::size_t>();
  c.init_std = j.at("init_std").get<double>();
  c.encoder_init = j.at("encoder_init").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::string blob_name(const std::string& param) {
  std::string s = param;
  std::replace(s.begin(), s.end(), '.', '_');
  return s + ".f32";
}

}  // namespace

void save_checkpoint(const DorNet& net, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["config"] = config_to_json(net.config());
  manifest["seed"] = net.config().seed;
  manifest["tensors"] = nlohmann::json::array();
  for (const auto& p : net.parameters()) {
    const std::string file = blob_name(p.name);
    write_f32_blob(dir / file, p.var.value().data());
    manifest["tensors"].push_back({{"name", p.name}, {"shape", p.var.value().shape()}, {"file", file}});
  }
  std::ofstream out(dir / "model.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "model.json").string());
  out << manifest.dump(2) << '\n';
}

DorNet load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw std::runtime_error("cannot open " + (dir / "model.json").string());
  const nlohmann::json manifest = nlohmann::json::parse(in);
  if (manifest.at("format_version").get<int>() != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + manifest.at("format_version").dump());
  }
  DorNet net(config_from_json(manifest.at("config")));
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != net.parameters().size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model needs " +
                             std::to_string(net.parameters().size()));
  }
  for (const auto& t : tensors) {
    Var& v = net.param(t.at("name").get<std::string>());
    const auto shape = t.at("shape").get<Shape>();
    if (shape != v.value().shape()) {
      throw std::runtime_error("checkpoint tensor " + t.at("name").get<std::string>() + " has shape " +
                               nn::to_string(shape) + ", model expects " + nn::to_string(v.value().shape()));
    }
    const auto blob = read_f32_blob(dir / t.at("file").get<std::string>(), v.value().size());
    std::copy(blob.begin(), blob.end(), v.mutable_value().values().begin());
  }
  return net;
}

}  // namespace dor
