#include "dor/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "dor/blob_io.hpp"
#include "dor/rng.hpp"

namespace dor {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

SynthConfig SynthConfig::for_geometry(const ImageGeometry& geom, std::size_t joints) {
  SynthConfig c;
  const double k = static_cast<double>(std::min(geom.width(), geom.height())) / 224.0;
  auto scaled = [k](Range r) { return Range{r.lo * k, r.hi * k}; };
  c.geom = geom;
  c.joints = joints;
  c.bone_length = scaled(c.bone_length);
  c.palm_radius = scaled(c.palm_radius);
  c.joint_radius = scaled(c.joint_radius);
  c.root_jitter *= k;
  c.blur_radius = std::max(1, static_cast<int>(std::lround(c.blur_radius * k)));
  return c;
}

void SynthConfig::validate() const {
  auto ok = [](Range r) { return std::isfinite(r.lo) && std::isfinite(r.hi) && r.lo <= r.hi; };
  if (joints < 2) throw std::invalid_argument("SynthConfig: need at least 2 joints");
  if (!ok(bone_length) || !ok(palm_radius) || !ok(joint_radius) || !ok(bend) || !ok(tilt)) {
    throw std::invalid_argument("SynthConfig: degenerate range");
  }
  if (bone_length.lo <= 0.0 || palm_radius.lo <= 0.0 || joint_radius.lo <= 0.0) {
    throw std::invalid_argument("SynthConfig: lengths and radii must be positive");
  }
  if (std::max(std::abs(tilt.lo), std::abs(tilt.hi)) >= std::numbers::pi / 2) {
    throw std::invalid_argument("SynthConfig: tilt must stay below 90 degrees");
  }
  if (!(hole_ceiling > 0.0 && hole_ceiling <= 1.0)) throw std::invalid_argument("SynthConfig: hole_ceiling in (0,1]");
  if (!(noise_sigma >= 0.0) || !(edge_threshold > 0.0) || blur_radius < 1) {
    throw std::invalid_argument("SynthConfig: invalid corruption scale");
  }
}

std::string to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::EdgeBlur: return "edge_blur";
    case CorruptionKind::HoleDropout: return "hole_dropout";
    case CorruptionKind::PlaneNoise: return "plane_noise";
  }
  return "?";
}

CorruptionKind parse_corruption_kind(const std::string& s) {
  if (s == "edge_blur") return CorruptionKind::EdgeBlur;
  if (s == "hole_dropout") return CorruptionKind::HoleDropout;
  if (s == "plane_noise") return CorruptionKind::PlaneNoise;
  throw std::invalid_argument("unknown corruption kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Generator

Skeleton sample_skeleton(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const ImageGeometry& g = cfg.geom;
  const double w = static_cast<double>(g.width()), h = static_cast<double>(g.height());
  const double d = g.depth_range();
  // Depth units per pixel of out-of-plane travel.
  const double zk = d / w;

  const double z_lo = d / 4.0, z_hi = 3.0 * d / 4.0;
  const double margin = 0.05 * d;
  Joint3 root{w / 2.0 + rng.uniform(-cfg.root_jitter, cfg.root_jitter),
              h / 2.0 + rng.uniform(-cfg.root_jitter, cfg.root_jitter),
              std::clamp(rng.normal(d / 2.0, cfg.root_depth_sigma * d), z_lo + margin, z_hi - margin)};
  const double palm = rng.uniform(cfg.palm_radius.lo, cfg.palm_radius.hi);
  const double heading = rng.uniform(-std::numbers::pi, std::numbers::pi);

  Skeleton sk;
  sk.joints.push_back(root);
  sk.radii.push_back(palm);
  std::vector<std::size_t> parent{0};

  constexpr std::array<double, 5> kFan{-1.5, -0.55, -0.18, 0.18, 0.55};
  const std::size_t rest = cfg.joints - 1;
  for (std::size_t c = 0; c < 5; ++c) {
    const std::size_t len = rest / 5 + (c < rest % 5 ? 1 : 0);
    if (len == 0) continue;
    double phi = heading + kFan[c] + rng.uniform(-cfg.finger_jitter, cfg.finger_jitter);
    Joint3 p = root;
    std::size_t prev = 0;
    for (std::size_t k = 0; k < len; ++k) {
      double step = rng.uniform(cfg.bone_length.lo, cfg.bone_length.hi);
      if (k == 0) step += 0.9 * palm;
      if (k > 0) phi += rng.uniform(cfg.bend.lo, cfg.bend.hi);
      const double psi = rng.uniform(cfg.tilt.lo, cfg.tilt.hi);
      p = {p.x + step * std::cos(psi) * std::cos(phi), p.y + step * std::cos(psi) * std::sin(phi),
           p.z + step * std::sin(psi) * zk};
      const double shrink = 1.0 - 0.15 * static_cast<double>(k) / static_cast<double>(len);
      sk.joints.push_back(p);
      sk.radii.push_back(rng.uniform(cfg.joint_radius.lo, cfg.joint_radius.hi) * shrink);
      parent.push_back(prev);
      prev = sk.joints.size() - 1;
    }
  }

  // Shrink the hand about its root until every joint fits the crop box.
  double s = 1.0;
  auto limit = [&s](double off, double room_lo, double room_hi) {
    if (off > 0.0) s = std::min(s, room_hi / off);
    if (off < 0.0) s = std::min(s, room_lo / off);
  };
  for (std::size_t a = 1; a < sk.joints.size(); ++a) {
    const Joint3& j = sk.joints[a];
    const double r = sk.radii[a];
    limit(j.x - root.x, r - root.x, (w - r) - root.x);
    limit(j.y - root.y, r - root.y, (h - r) - root.y);
    limit(j.z - root.z, z_lo - root.z, z_hi - root.z);
  }
  s = std::max(0.0, s);
  for (std::size_t a = 0; a < sk.joints.size(); ++a) {
    Joint3& j = sk.joints[a];
    j = {root.x + s * (j.x - root.x), root.y + s * (j.y - root.y), root.z + s * (j.z - root.z)};
    j = {static_cast<float>(j.x), static_cast<float>(j.y), static_cast<float>(j.z)};
    j.x = std::clamp(j.x, 0.0, static_cast<double>(std::nextafter(static_cast<float>(w), 0.0f)));
    j.y = std::clamp(j.y, 0.0, static_cast<double>(std::nextafter(static_cast<float>(h), 0.0f)));
    j.z = std::clamp(j.z, z_lo, z_hi);
  }

  for (std::size_t a = 0; a < sk.joints.size(); ++a) {
    Primitive p{Primitive::Kind::Sphere, {sk.joints[a], sk.radii[a]}, {}, {a}};
    sk.primitives.push_back(std::move(p));
  }
  for (std::size_t a = 1; a < sk.joints.size(); ++a) {
    const std::size_t b = parent[a];
    const double r = 0.75 * std::min(sk.radii[a], sk.radii[b]);
    Primitive p{Primitive::Kind::Capsule, {}, {sk.joints[b], sk.joints[a], r}, {b, a}};
    sk.primitives.push_back(std::move(p));
  }
  return sk;
}

DepthImage render_depth(const std::vector<Primitive>& primitives, const ImageGeometry& geom) {
  const std::size_t w = geom.width(), h = geom.height();
  const double d = geom.depth_range();
  const double zk = d / static_cast<double>(w);
  std::vector<double> zbuf(w * h, d);

  auto bounds = [&](double lo, double hi, std::size_t n) {
    const auto a = static_cast<std::ptrdiff_t>(std::floor(lo));
    const auto b = static_cast<std::ptrdiff_t>(std::ceil(hi));
    return std::pair<std::size_t, std::size_t>{static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(a, 0, n)),
                                               static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(b, 0, n))};
  };

  for (const Primitive& p : primitives) {
    if (p.kind == Primitive::Kind::Sphere) {
      const Sphere& s = p.sphere;
      const auto [x0, x1] = bounds(s.center.x - s.radius, s.center.x + s.radius, w);
      const auto [y0, y1] = bounds(s.center.y - s.radius, s.center.y + s.radius, h);
      for (std::size_t i = y0; i < y1; ++i) {
        for (std::size_t j = x0; j < x1; ++j) {
          const double dx = static_cast<double>(j) + 0.5 - s.center.x;
          const double dy = static_cast<double>(i) + 0.5 - s.center.y;
          const double r2 = s.radius * s.radius - dx * dx - dy * dy;
          if (r2 <= 0.0) continue;
          double& z = zbuf[i * w + j];
          z = std::min(z, s.center.z - std::sqrt(r2) * zk);
        }
      }
    } else {
      const Capsule& c = p.capsule;
      const auto [x0, x1] =
          bounds(std::min(c.a.x, c.b.x) - c.radius, std::max(c.a.x, c.b.x) + c.radius, w);
      const auto [y0, y1] =
          bounds(std::min(c.a.y, c.b.y) - c.radius, std::max(c.a.y, c.b.y) + c.radius, h);
      const double ex = c.b.x - c.a.x, ey = c.b.y - c.a.y;
      const double len2 = ex * ex + ey * ey;
      for (std::size_t i = y0; i < y1; ++i) {
        for (std::size_t j = x0; j < x1; ++j) {
          const double qx = static_cast<double>(j) + 0.5 - c.a.x;
          const double qy = static_cast<double>(i) + 0.5 - c.a.y;
          const double t = len2 > 0.0 ? std::clamp((qx * ex + qy * ey) / len2, 0.0, 1.0) : 0.0;
          const double dx = qx - t * ex, dy = qy - t * ey;
          const double r2 = c.radius * c.radius - dx * dx - dy * dy;
          if (r2 <= 0.0) continue;
          const double zc = c.a.z + t * (c.b.z - c.a.z);
          double& z = zbuf[i * w + j];
          z = std::min(z, zc - std::sqrt(r2) * zk);
        }
      }
    }
  }

  DepthImage img{w, h, std::vector<float>(w * h)};
  for (std::size_t p = 0; p < w * h; ++p) img.values[p] = static_cast<float>(std::clamp(zbuf[p], 0.0, d));
  return img;
}

DepthFrame generate_frame(const SynthConfig& cfg, std::uint64_t seed) {
  Skeleton sk = sample_skeleton(cfg, seed);
  DepthFrame f;
  f.depth = render_depth(sk.primitives, cfg.geom);
  f.joints = std::move(sk.joints);
  f.meta.seed = seed;
  return f;
}

// ---------------------------------------------------------------------------
// Corruptions

namespace {

void edge_blur(DepthImage& img, double m, const SynthConfig& cfg) {
  const std::size_t w = img.width, h = img.height;
  const double thr = cfg.edge_threshold * cfg.geom.depth_range();
  const int r = std::max(1, static_cast<int>(std::lround(m * cfg.blur_radius)));
  const DepthImage src = img;
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double v = src.at(i, j);
      double jump = 0.0;
      if (i > 0) jump = std::max(jump, std::abs(v - src.at(i - 1, j)));
      if (i + 1 < h) jump = std::max(jump, std::abs(v - src.at(i + 1, j)));
      if (j > 0) jump = std::max(jump, std::abs(v - src.at(i, j - 1)));
      if (j + 1 < w) jump = std::max(jump, std::abs(v - src.at(i, j + 1)));
      if (jump <= thr) continue;
      double sum = 0.0;
      int n = 0;
      for (int di = -r; di <= r; ++di) {
        for (int dj = -r; dj <= r; ++dj) {
          const auto ii = static_cast<std::ptrdiff_t>(i) + di, jj = static_cast<std::ptrdiff_t>(j) + dj;
          if (ii < 0 || jj < 0 || ii >= static_cast<std::ptrdiff_t>(h) || jj >= static_cast<std::ptrdiff_t>(w)) continue;
          sum += src.at(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj));
          ++n;
        }
      }
      img.at(i, j) = static_cast<float>((1.0 - m) * v + m * sum / n);
    }
  }
}

void hole_dropout(DepthImage& img, double m, Rng& rng, const SynthConfig& cfg) {
  const std::size_t w = img.width, h = img.height, total = w * h;
  const auto target = static_cast<std::size_t>(std::ceil(m * cfg.hole_ceiling * static_cast<double>(total)));
  std::vector<bool> hole(total, false);
  std::size_t zeroed = 0;
  const std::size_t min_side = std::max<std::size_t>(1, w / 16), max_side = std::max<std::size_t>(1, w / 4);
  while (zeroed < target) {
    const std::size_t pw = min_side + rng.below(max_side - min_side + 1);
    const std::size_t ph = min_side + rng.below(max_side - min_side + 1);
    const std::size_t x0 = rng.below(w), y0 = rng.below(h);
    for (std::size_t i = y0; i < std::min(h, y0 + ph); ++i) {
      for (std::size_t j = x0; j < std::min(w, x0 + pw); ++j) {
        if (!hole[i * w + j]) {
          hole[i * w + j] = true;
          img.at(i, j) = 0.0f;
          ++zeroed;
        }
      }
    }
  }
}

void plane_noise(DepthImage& img, double m, Rng& rng, const SynthConfig& cfg) {
  const double d = cfg.geom.depth_range();
  const double sigma = m * cfg.noise_sigma * d;
  for (auto& v : img.values) v = static_cast<float>(std::clamp(v + rng.normal(0.0, sigma), 0.0, d));
}

}  // namespace

DepthFrame corrupt(const DepthFrame& frame, CorruptionKind kind, double magnitude, std::uint64_t seed,
                   const SynthConfig& cfg) {
  if (!(magnitude >= 0.0 && magnitude <= 1.0)) {
    throw std::invalid_argument("corrupt: magnitude must lie in [0,1]");
  }
  DepthFrame out = frame;
  out.meta.corruptions.push_back({kind, magnitude, seed});
  if (magnitude == 0.0) return out;
  Rng rng(seed);
  switch (kind) {
    case CorruptionKind::EdgeBlur: edge_blur(out.depth, magnitude, cfg); break;
    case CorruptionKind::HoleDropout: hole_dropout(out.depth, magnitude, rng, cfg); break;
    case CorruptionKind::PlaneNoise: plane_noise(out.depth, magnitude, rng, cfg); break;
  }
  return out;
}

DepthFrame corrupt(const DepthFrame& frame, const std::string& kind, double magnitude, std::uint64_t seed,
                   const SynthConfig& cfg) {
  return corrupt(frame, parse_corruption_kind(kind), magnitude, seed, cfg);
}

Dataset synthesize(const SynthConfig& cfg, std::size_t count, std::uint64_t seed,
                   const std::vector<std::pair<CorruptionKind, double>>& corruptions) {
  Dataset data{cfg.geom, cfg.joints, {}};
  data.frames.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t fseed = derive_seed(seed, i);
    DepthFrame f = generate_frame(cfg, fseed);
    for (std::size_t c = 0; c < corruptions.size(); ++c) {
      f = corrupt(f, corruptions[c].first, corruptions[c].second, derive_seed(fseed, 1000 + c), cfg);
    }
    data.frames.push_back(std::move(f));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Dataset files

namespace {

json geometry_json(const ImageGeometry& g) {
  return {{"width", g.width()}, {"height", g.height()}, {"depth_range", g.depth_range()}, {"stride", g.stride()}};
}

ImageGeometry geometry_from(const json& j) {
  return ImageGeometry(j.at("width").get<std::size_t>(), j.at("height").get<std::size_t>(),
                       j.at("depth_range").get<double>(), j.at("stride").get<std::size_t>());
}

std::string frame_file(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05zu.f32", i);
  return buf;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DatasetError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DatasetError(p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw DatasetError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

}  // namespace

void write_dataset(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["format_version"] = kDatasetFormatVersion;
  manifest["geometry"] = geometry_json(data.geom);
  manifest["joint_count"] = data.joints;
  manifest["frame_count"] = data.frames.size();
  manifest["joints_file"] = "joints.csv";
  manifest["frames"] = json::array();

  std::ofstream csv(dir / "joints.csv");
  if (!csv) throw DatasetError("cannot write " + (dir / "joints.csv").string());
  csv << "frame,joint,x,y,z\n";
  char line[160];
  for (std::size_t i = 0; i < data.frames.size(); ++i) {
    const DepthFrame& f = data.frames[i];
    if (f.depth.width != data.geom.width() || f.depth.height != data.geom.height()) {
      throw DatasetError("frame " + std::to_string(i) + " does not match dataset geometry");
    }
    if (f.joints.size() != data.joints) {
      throw DatasetCountError("frame " + std::to_string(i) + " has " + std::to_string(f.joints.size()) +
                              " joints, dataset declares " + std::to_string(data.joints));
    }
    const std::string file = frame_file(i);
    write_f32_blob(dir / file, std::span<const float>(f.depth.values));
    json corr = json::array();
    for (const auto& c : f.meta.corruptions) {
      corr.push_back({{"kind", to_string(c.kind)}, {"magnitude", c.magnitude}, {"seed", c.seed}});
    }
    manifest["frames"].push_back({{"index", i}, {"seed", f.meta.seed}, {"corruptions", corr}, {"depth_file", file}});
    for (std::size_t a = 0; a < f.joints.size(); ++a) {
      std::snprintf(line, sizeof line, "%zu,%zu,%.9g,%.9g,%.9g\n", i, a, static_cast<float>(f.joints[a].x),
                    static_cast<float>(f.joints[a].y), static_cast<float>(f.joints[a].z));
      csv << line;
    }
  }
  if (!csv) throw DatasetError("write failed: joints.csv");
  write_json(dir / "manifest.json", manifest);
}

Dataset read_dataset(const fs::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  const int version = manifest.value("format_version", -1);
  if (version != kDatasetFormatVersion) {
    throw DatasetVersionError("dataset format version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kDatasetFormatVersion) + ")");
  }
  Dataset data{geometry_from(manifest.at("geometry")), manifest.at("joint_count").get<std::size_t>(), {}};
  const auto count = manifest.at("frame_count").get<std::size_t>();
  const json& records = manifest.at("frames");
  if (records.size() != count) {
    throw DatasetCountError("manifest declares " + std::to_string(count) + " frames but lists " +
                            std::to_string(records.size()));
  }
  std::size_t blobs = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with("frame_") && name.ends_with(".f32")) ++blobs;
  }
  if (blobs != count) {
    throw DatasetCountError("manifest declares " + std::to_string(count) + " frames, directory holds " +
                            std::to_string(blobs) + " depth blobs");
  }

  const std::size_t pixels = data.geom.width() * data.geom.height();
  data.frames.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const json& r = records[i];
    DepthFrame& f = data.frames[i];
    const fs::path blob = dir / r.at("depth_file").get<std::string>();
    if (!fs::exists(blob)) throw DatasetCountError("missing depth blob " + blob.string());
    f.depth = {data.geom.width(), data.geom.height(), read_f32_blob(blob, pixels)};
    f.meta.seed = r.at("seed").get<std::uint64_t>();
    for (const auto& c : r.at("corruptions")) {
      f.meta.corruptions.push_back({parse_corruption_kind(c.at("kind").get<std::string>()),
                                    c.at("magnitude").get<double>(), c.value("seed", std::uint64_t{0})});
    }
    f.joints.assign(data.joints, Joint3{});
  }

  std::ifstream csv(dir / manifest.value("joints_file", std::string("joints.csv")));
  if (!csv) throw DatasetError("cannot open joints file in " + dir.string());
  std::string line;
  std::getline(csv, line);  // header
  std::size_t rows = 0;
  std::vector<bool> seen(count * data.joints, false);
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::size_t frame = 0, joint = 0;
    float x = 0, y = 0, z = 0;
    if (std::sscanf(line.c_str(), "%zu,%zu,%f,%f,%f", &frame, &joint, &x, &y, &z) != 5) {
      throw DatasetError("malformed joints row: " + line);
    }
    if (frame >= count || joint >= data.joints) {
      throw DatasetCountError("joints row refers to frame " + std::to_string(frame) + " joint " +
                              std::to_string(joint) + " outside the manifest");
    }
    data.frames[frame].joints[joint] = {x, y, z};
    seen[frame * data.joints + joint] = true;
    ++rows;
  }
  if (rows != count * data.joints || !std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
    throw DatasetCountError("joints file holds " + std::to_string(rows) + " rows, expected " +
                            std::to_string(count * data.joints));
  }
  return data;
}

std::optional<DepthFrame> DatasetFrameSource::next() {
  if (cursor_ >= data_.frames.size()) return std::nullopt;
  return data_.frames[cursor_++];
}

Dataset collect(FrameSource& source, std::size_t joints) {
  Dataset data{source.geometry(), joints, {}};
  while (auto f = source.next()) {
    if (f->joints.size() != joints) throw DatasetCountError("frame source yielded a frame with wrong joint count");
    data.frames.push_back(std::move(*f));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Probability-map files

namespace {

json grid_json(const DiscretizationGrid& g) {
  return {{"axis", to_string(g.axis())},
          {"kind", to_string(g.kind())},
          {"upper_bound", g.upper_bound()},
          {"thresholds", std::vector<double>(g.thresholds().begin(), g.thresholds().end())}};
}

DiscretizationGrid grid_from(const json& j) {
  return DiscretizationGrid(parse_axis(j.at("axis").get<std::string>()),
                            parse_grid_kind(j.at("kind").get<std::string>()),
                            j.at("thresholds").get<std::vector<double>>(), j.at("upper_bound").get<double>());
}

}  // namespace

void write_probability_maps(const ProbabilityMaps& maps, const GridSet& grids, const ImageGeometry& geom,
                            const fs::path& dir) {
  if (!(map_dims(grids, geom, maps.dims.joints) == maps.dims)) {
    throw std::invalid_argument("write_probability_maps: maps do not match grids/geometry");
  }
  fs::create_directories(dir);
  write_f32_blob(dir / "prob_x.f32", std::span<const double>(maps.x));
  write_f32_blob(dir / "prob_y.f32", std::span<const double>(maps.y));
  write_f32_blob(dir / "prob_z.f32", std::span<const double>(maps.z));
  const MapDims& d = maps.dims;
  json m;
  m["format_version"] = kDatasetFormatVersion;
  m["geometry"] = geometry_json(geom);
  m["joint_count"] = d.joints;
  m["grids"] = {{"x", grid_json(grids.x)}, {"y", grid_json(grids.y)}, {"z", grid_json(grids.z)}};
  m["tensors"] = {
      {"x", {{"file", "prob_x.f32"}, {"shape", {d.rows, d.kx, d.joints}}}},
      {"y", {{"file", "prob_y.f32"}, {"shape", {d.ky, d.cols, d.joints}}}},
      {"z", {{"file", "prob_z.f32"}, {"shape", {d.rows, d.cols, d.kz, d.joints}}}},
  };
  write_json(dir / "maps.json", m);
}

MapsFile read_probability_maps(const fs::path& dir) {
  const json m = read_json(dir / "maps.json");
  const int version = m.value("format_version", -1);
  if (version != kDatasetFormatVersion) {
    throw DatasetVersionError("probability map format version " + std::to_string(version) + " is not supported");
  }
  const ImageGeometry geom = geometry_from(m.at("geometry"));
  GridSet grids{grid_from(m.at("grids").at("x")), grid_from(m.at("grids").at("y")), grid_from(m.at("grids").at("z"))};
  const MapDims d = map_dims(grids, geom, m.at("joint_count").get<std::size_t>());
  auto load = [&](const char* axis, std::size_t n, const std::vector<std::size_t>& shape) {
    const json& t = m.at("tensors").at(axis);
    if (t.at("shape").get<std::vector<std::size_t>>() != shape) {
      throw DatasetCountError(std::string("tensor ") + axis + " shape disagrees with grids/geometry");
    }
    const auto f = read_f32_blob(dir / t.at("file").get<std::string>(), n);
    return std::vector<double>(f.begin(), f.end());
  };
  ProbabilityMaps maps;
  maps.dims = d;
  maps.x = load("x", d.x_size(), {d.rows, d.kx, d.joints});
  maps.y = load("y", d.y_size(), {d.ky, d.cols, d.joints});
  maps.z = load("z", d.z_size(), {d.rows, d.cols, d.kz, d.joints});
  return MapsFile{geom, std::move(grids), std::move(maps)};
}

}  // namespace dor
