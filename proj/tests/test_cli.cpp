#include <doctest.h>

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cli.hpp"
#include "dor/data.hpp"
#include "temp_dir.hpp"

using dor::testing::TempDir;
namespace cli = dor::cli;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"--help"}).code == cli::kExitOk);
  CHECK(run({"synth", "--help"}).code == cli::kExitOk);
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run({"grid-info", "--axis", "z", "--extent", "8", "--bogus"}).code == cli::kExitUsage);
  CHECK(run({"grid-info", "--axis", "w", "--extent", "8", "--count", "4"}).code == cli::kExitUsage);
  CHECK(run({"synth"}).code == cli::kExitUsage);
}

TEST_CASE("grid-info prints the normal grid") {
  const Run r = run({"grid-info", "--axis", "z", "--extent", "8", "--levels", "2"});
  REQUIRE(r.code == 0);
  const auto l = lines(r.out);
  REQUIRE(l.size() == 7);
  CHECK(l[0] == "index,threshold,interval");
  CHECK(l[1] == "0,0,2");
  CHECK(l[2] == "1,2,1");
  CHECK(l[3] == "2,3,1");
  CHECK(l[4] == "3,4,1");
  CHECK(l[5] == "4,5,1");
  CHECK(l[6] == "5,6,2");

  const Run u = run({"grid-info", "--axis", "x", "--extent", "8", "--count", "4"});
  REQUIRE(u.code == 0);
  CHECK(lines(u.out).size() == 5);
  CHECK(lines(u.out)[4] == "3,6,2");
}

TEST_CASE("synth, train, eval") {
  TempDir tmp;
  const auto data = (tmp.path() / "data").string();
  const auto model = (tmp.path() / "model").string();
  Run s = run({"synth", "--count", "4", "--size", "64", "--joints", "6", "--seed", "3", "--out", data,
               "--corrupt", "plane_noise=0.2"});
  REQUIRE(s.code == 0);
  const dor::Dataset d = dor::read_dataset(data);
  CHECK(d.frames.size() == 4);
  CHECK(d.joints == 6);
  CHECK(d.geom.width() == 64);
  CHECK(d.frames[0].meta.corruptions.size() == 1);

  const auto cfg = (tmp.path() / "cfg.json").string();
  std::ofstream(cfg) << R"({"stage_channels": [4, 4, 4, 4, 4], "feature_channels": 4, "context_channels": 4,
                           "batch_size": 2, "epochs": 1})";
  Run t = run({"train", "--config", cfg, "--data", data, "--out", model, "--seed", "1"});
  REQUIRE(t.code == 0);
  CHECK(std::filesystem::exists(std::filesystem::path(model) / "loss.csv"));

  Run e = run({"eval", "--model", model, "--data", data, "--max-threshold", "20", "--threshold-step", "10"});
  REQUIRE(e.code == 0);
  CHECK(e.out.rfind("metric,key,value", 0) == 0);

  std::filesystem::create_directories(tmp.path() / "empty");
  Run missing = run({"eval", "--model", (tmp.path() / "empty").string(), "--data", data});
  CHECK(missing.code == cli::kExitFailure);

  std::ofstream(cfg) << R"({"stage_channels": [4, 4, 4, 4, 4], "feature_channels": 4, "context_channels": 4,
                           "batch_size": 2, "epochs": 50, "lr": 1e30})";
  Run bad = run({"train", "--config", cfg, "--data", data, "--out", (tmp.path() / "bad").string()});
  CHECK(bad.code == cli::kExitFailure);

  std::ofstream(cfg) << R"({"lr_rate": 1})";
  CHECK(run({"train", "--config", cfg, "--data", data}).code == cli::kExitUsage);
}

TEST_CASE("decode-demo decodes a map file") {
  TempDir tmp;
  const dor::ImageGeometry g(64, 64, 64.0);
  const dor::GridSet grids = dor::default_grids(g, dor::GridKind::Uniform);
  const dor::JointSet j{{10.0, 20.0, 30.0}};
  dor::write_probability_maps(dor::encode_gt(j, grids, g), grids, g, tmp.path());
  const Run r = run({"decode-demo", "--maps", tmp.path().string()});
  REQUIRE(r.code == 0);
  const auto l = lines(r.out);
  REQUIRE(l.size() == 2);
  CHECK(l[0] == "joint,x,y,z");
  CHECK(l[1].rfind("0,", 0) == 0);
}
