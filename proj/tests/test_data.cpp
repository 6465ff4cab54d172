#include <doctest.h>

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "dor/blob_io.hpp"
#include "dor/data.hpp"
#include "temp_dir.hpp"

using namespace dor;
using dor::testing::TempDir;

namespace {

bool same_frames(const Dataset& a, const Dataset& b) {
  if (a.frames.size() != b.frames.size()) return false;
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    if (a.frames[i].depth.values != b.frames[i].depth.values) return false;
    if (a.frames[i].joints != b.frames[i].joints) return false;
    if (!(a.frames[i].meta == b.frames[i].meta)) return false;
  }
  return true;
}

std::size_t zero_count(const DepthImage& d) {
  std::size_t n = 0;
  for (float v : d.values) n += v == 0.0f;
  return n;
}

}  // namespace

TEST_CASE("config scaling and validation") {
  const auto c = SynthConfig::for_geometry(ImageGeometry(448, 448, 448.0), 14);
  CHECK(c.bone_length.lo == doctest::Approx(28.0));
  CHECK(c.palm_radius.hi == doctest::Approx(40.0));
  CHECK_NOTHROW(c.validate());
  CHECK_THROWS(SynthConfig::for_geometry(ImageGeometry(64, 64, 64.0), 0).validate());
}

TEST_CASE("synthesis is deterministic in the seed") {
  const auto cfg = SynthConfig::for_geometry(ImageGeometry(64, 64, 64.0));
  const Dataset a = synthesize(cfg, 6, 42), b = synthesize(cfg, 6, 42), c = synthesize(cfg, 6, 43);
  CHECK(same_frames(a, b));
  CHECK_FALSE(same_frames(a, c));
  // A frame does not depend on how many frames follow it.
  const Dataset longer = synthesize(cfg, 9, 42);
  CHECK(longer.frames[3].joints == a.frames[3].joints);
}

TEST_CASE("joints and depth stay in range") {
  const ImageGeometry g(224, 224, 224.0);
  const auto cfg = SynthConfig::for_geometry(g);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Skeleton s = sample_skeleton(cfg, seed);
    REQUIRE(s.joints.size() == 14);
    for (const auto& j : s.joints) {
      CHECK(j.x >= 0.0);
      CHECK(j.x < 224.0);
      CHECK(j.y >= 0.0);
      CHECK(j.y < 224.0);
      CHECK(j.z >= 56.0);
      CHECK(j.z <= 168.0);
      CHECK(static_cast<double>(static_cast<float>(j.x)) == j.x);
      CHECK(static_cast<double>(static_cast<float>(j.z)) == j.z);
    }
  }
  const DepthFrame f = generate_frame(cfg, 5);
  for (float v : f.depth.values) {
    CHECK(v >= 0.0f);
    CHECK(v <= 224.0f);
  }
}

TEST_CASE("root depth centres on the middle of the range") {
  const ImageGeometry g(224, 224, 224.0);
  const auto cfg = SynthConfig::for_geometry(g);
  double sum = 0.0;
  const int n = 10000;
  for (int s = 0; s < n; ++s) {
    const Skeleton sk = sample_skeleton(cfg, static_cast<std::uint64_t>(s));
    double z = 0.0;
    for (const auto& j : sk.joints) z += j.z;
    sum += z / static_cast<double>(sk.joints.size());
  }
  CHECK(std::abs(sum / n - 112.0) <= 22.4);
}

TEST_CASE("rendered surface lies in front of every visible joint") {
  const ImageGeometry g(64, 64, 64.0);
  const auto cfg = SynthConfig::for_geometry(g);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const DepthFrame f = generate_frame(cfg, seed);
    std::size_t hand = 0;
    for (float v : f.depth.values) hand += v < 64.0f;
    CHECK(hand > 0);
    for (const auto& j : f.joints) {
      const auto r = static_cast<std::size_t>(j.y), c = static_cast<std::size_t>(j.x);
      CHECK(f.depth.at(r, c) <= j.z + 1e-3);
    }
  }
}

TEST_CASE("corruptions") {
  const ImageGeometry g(64, 64, 64.0);
  const auto cfg = SynthConfig::for_geometry(g);
  const DepthFrame f = generate_frame(cfg, 11);

  SUBCASE("magnitude zero is the identity") {
    for (auto kind : {CorruptionKind::EdgeBlur, CorruptionKind::HoleDropout, CorruptionKind::PlaneNoise}) {
      const DepthFrame c = corrupt(f, kind, 0.0, 1, cfg);
      CHECK(c.depth.values == f.depth.values);
      CHECK(c.meta.corruptions.size() == 1);
    }
  }
  SUBCASE("hole dropout at full magnitude zeroes at least half the frame") {
    const DepthFrame c = corrupt(f, "hole_dropout", 1.0, 3, cfg);
    CHECK(zero_count(c.depth) >= g.width() * g.height() / 2);
    CHECK(c.joints == f.joints);
  }
  SUBCASE("plane noise perturbs with the configured scale") {
    const DepthFrame c = corrupt(f, CorruptionKind::PlaneNoise, 1.0, 3, cfg);
    double s2 = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < f.depth.values.size(); ++i) {
      const double d = c.depth.values[i] - f.depth.values[i];
      if (f.depth.values[i] > 4.0f && f.depth.values[i] < 60.0f) {
        s2 += d * d;
        ++n;
      }
    }
    REQUIRE(n > 20);
    CHECK(std::sqrt(s2 / n) == doctest::Approx(0.03 * 64.0).epsilon(0.3));
    CHECK(c.joints == f.joints);
  }
  SUBCASE("edge blur only touches pixels") {
    const DepthFrame c = corrupt(f, CorruptionKind::EdgeBlur, 1.0, 3, cfg);
    CHECK(c.depth.values != f.depth.values);
    CHECK(c.joints == f.joints);
  }
  SUBCASE("bad arguments") {
    CHECK_THROWS_AS(corrupt(f, "salt_pepper", 0.5, 1, cfg), std::invalid_argument);
    CHECK_THROWS_AS(corrupt(f, CorruptionKind::HoleDropout, 1.5, 1, cfg), std::invalid_argument);
    CHECK_THROWS_AS(corrupt(f, CorruptionKind::HoleDropout, -0.1, 1, cfg), std::invalid_argument);
  }
  CHECK(parse_corruption_kind(to_string(CorruptionKind::EdgeBlur)) == CorruptionKind::EdgeBlur);
}

TEST_CASE("dataset round trip") {
  const auto cfg = SynthConfig::for_geometry(ImageGeometry(64, 64, 64.0));
  const Dataset d = synthesize(cfg, 8, 9, {{CorruptionKind::PlaneNoise, 0.5}});
  TempDir tmp;
  write_dataset(d, tmp.path());
  const Dataset r = read_dataset(tmp.path());
  CHECK(r.geom == d.geom);
  CHECK(r.joints == d.joints);
  CHECK(same_frames(d, r));

  DatasetFrameSource src(r);
  const Dataset again = collect(src, r.joints);
  CHECK(same_frames(d, again));
}

TEST_CASE("dataset read errors") {
  const auto cfg = SynthConfig::for_geometry(ImageGeometry(32, 32, 32.0));
  const Dataset d = synthesize(cfg, 3, 1);

  SUBCASE("missing blob") {
    TempDir tmp;
    write_dataset(d, tmp.path());
    std::filesystem::remove(tmp.path() / "frame_00002.f32");
    CHECK_THROWS_AS(read_dataset(tmp.path()), DatasetCountError);
  }
  SUBCASE("truncated blob") {
    TempDir tmp;
    write_dataset(d, tmp.path());
    std::filesystem::resize_file(tmp.path() / "frame_00001.f32", 100);
    CHECK_THROWS_AS(read_dataset(tmp.path()), TruncatedBlobError);
  }
  SUBCASE("version") {
    TempDir tmp;
    write_dataset(d, tmp.path());
    std::ifstream in(tmp.path() / "manifest.json");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const auto pos = text.find("\"format_version\"");
    REQUIRE(pos != std::string::npos);
    const auto colon = text.find(':', pos);
    const auto end = text.find_first_of(",}", colon);
    text.replace(colon + 1, end - colon - 1, "99");
    std::ofstream(tmp.path() / "manifest.json") << text;
    CHECK_THROWS_AS(read_dataset(tmp.path()), DatasetVersionError);
  }
}

TEST_CASE("probability map files round trip") {
  const ImageGeometry g(64, 64, 64.0);
  const GridSet grids = default_grids(g, GridKind::Normal);
  const JointSet j{{10.5, 20.25, 30.0}, {40.0, 50.0, 33.0}};
  const ProbabilityMaps m = encode_gt(j, grids, g);
  TempDir tmp;
  write_probability_maps(m, grids, g, tmp.path());
  const MapsFile r = read_probability_maps(tmp.path());
  CHECK(r.geom == g);
  CHECK(r.maps.dims == m.dims);
  CHECK(r.maps.x == m.x);
  CHECK(r.maps.z == m.z);
  CHECK(r.grids.z.size() == grids.z.size());
  CHECK(r.grids.z.kind() == GridKind::Normal);
  const JointSet back = decode(r.maps, r.grids, g);
  const JointSet ref = decode(m, grids, g);
  for (std::size_t a = 0; a < j.size(); ++a) CHECK(back[a].z == doctest::Approx(ref[a].z));
}
