#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>

#include "dor/diagnostics.hpp"
#include "dor/grid.hpp"
#include "dor/rng.hpp"

using namespace dor;

namespace {

// Independent enumeration of the normal grid: lower half piece by piece,
// then the mirror image plus the midpoint.
std::vector<double> brute_normal(double d, int m) {
  std::set<double> pts;
  const double piece = d / 2.0 / m;
  for (int k = 0; k < m; ++k) {
    const int n = 1 << k;
    for (int j = 0; j < n; ++j) pts.insert(k * piece + j * piece / n);
  }
  std::set<double> all = pts;
  all.insert(d / 2.0);
  for (double p : pts) {
    if (p > 0.0) all.insert(d - p);
  }
  return {all.begin(), all.end()};
}

std::vector<double> as_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("uniform grid examples") {
  const auto g = uniform_grid(Axis::X, 224.0, 112);
  REQUIRE(g.size() == 112);
  for (std::size_t k = 0; k < 112; ++k) {
    CHECK(g.threshold(k) == 2.0 * k);
    CHECK(g.interval(k) == 2.0);
  }
  CHECK(as_vec(uniform_grid(Axis::X, 8.0, 4).thresholds()) == std::vector<double>{0, 2, 4, 6});
  CHECK_THROWS_AS(uniform_grid(Axis::X, 8.0, 1), std::invalid_argument);
  CHECK(g.max_interval() == g.min_interval());
}

TEST_CASE("grid construction validates thresholds") {
  CHECK_THROWS(DiscretizationGrid(Axis::X, GridKind::Uniform, {0.0}, 1.0));
  CHECK_THROWS(DiscretizationGrid(Axis::X, GridKind::Uniform, {0.5, 1.0}, 2.0));
  CHECK_THROWS(DiscretizationGrid(Axis::X, GridKind::Uniform, {0.0, 1.0, 1.0}, 2.0));
  CHECK_THROWS(DiscretizationGrid(Axis::X, GridKind::Uniform, {0.0, 1.0}, 1.0));
}

TEST_CASE("normal grid examples") {
  CHECK(as_vec(normal_grid(8.0, 2).thresholds()) == std::vector<double>{0, 2, 3, 4, 5, 6});
  CHECK(as_vec(normal_grid(8.0, 1).thresholds()) == std::vector<double>{0, 4});
  const auto g = normal_grid(16.0, 3);
  CHECK(g.size() == 14);
  // Both intervals bordering the midpoint are minimal.
  const std::size_t mid = g.locate(8.0);
  REQUIRE(g.threshold(mid) == 8.0);
  CHECK(g.interval(mid) == doctest::Approx(g.min_interval()));
  CHECK(g.interval(mid - 1) == doctest::Approx(g.min_interval()));
  CHECK_THROWS_AS(normal_grid(8.0, 0), std::invalid_argument);
}

TEST_CASE("normal grid matches brute-force enumeration") {
  for (double d : {8.0, 16.0, 224.0, 1000.0}) {
    for (int m = 1; m <= 6; ++m) {
      CAPTURE(d);
      CAPTURE(m);
      const auto g = normal_grid(d, m);
      const auto ref = brute_normal(d, m);
      REQUIRE(g.size() == ref.size());
      REQUIRE(g.size() == 2 * ((std::size_t{1} << m) - 1));
      for (std::size_t k = 0; k < ref.size(); ++k) CHECK(g.threshold(k) == doctest::Approx(ref[k]).epsilon(1e-12));
      double sum = 0.0;
      for (double v : g.intervals()) sum += v;
      CHECK(sum == doctest::Approx(d).epsilon(1e-12));
    }
  }
}

TEST_CASE("kz_to_levels") {
  CHECK(kz_to_levels(6).levels == 2);
  CHECK(kz_to_levels(6).achieved == 6);
  CHECK(kz_to_levels(14).levels == 3);
  CHECK(kz_to_levels(14).achieved == 14);
  CHECK(kz_to_levels(2).levels == 1);
  CHECK(kz_to_levels(2).achieved == 2);
  // Every target maps to the admissible count at minimal distance; ties go finer.
  for (std::size_t t = 0; t < 3000; ++t) {
    const auto c = kz_to_levels(t);
    for (int m = 1; m <= 12; ++m) {
      const std::size_t k = 2 * ((std::size_t{1} << m) - 1);
      const double gap = std::abs(double(k) - double(t)), best = std::abs(double(c.achieved) - double(t));
      REQUIRE(best <= gap);
      if (gap == best) REQUIRE(c.achieved >= k);
    }
  }
}

TEST_CASE("locate") {
  const auto ud = uniform_grid(Axis::X, 8.0, 4);
  CHECK(ud.locate(5.0) == 2);
  CHECK(ud.locate(0.0) == 0);
  CHECK(normal_grid(8.0, 2).locate(3.5) == 2);

  diag::reset();
  CHECK(ud.locate(-1.0) == 0);
  CHECK(ud.locate(8.0) == 3);
  CHECK(ud.locate(100.0) == 3);
  CHECK(diag::count_of(diag::Warning::LocateClamped) == 3);

  Rng rng(3);
  for (const auto& g : {uniform_grid(Axis::X, 224.0, 112), normal_grid(224.0, 5), normal_grid(100.0, 3)}) {
    for (std::size_t k = 0; k < g.size(); ++k) {
      REQUIRE(g.locate(g.threshold(k)) == k);
      const double eps = rng.uniform() * g.interval(k) * 0.999;
      REQUIRE(g.locate(g.threshold(k) + eps) == k);
    }
  }
}

TEST_CASE("default grids") {
  const auto gs = default_grids(ImageGeometry(224, 224, 224.0), GridKind::Normal);
  CHECK(gs.x.size() == 112);
  CHECK(gs.y.size() == 112);
  // D/4 = 56 snaps to 62 (M = 5).
  CHECK(gs.z.size() == 62);
  const auto gu = default_grids(ImageGeometry(224, 224, 224.0), GridKind::Uniform);
  CHECK(gu.z.size() == 62);
  CHECK(gu.z.kind() == GridKind::Uniform);
}

TEST_CASE("axis and kind names round-trip") {
  for (Axis a : {Axis::X, Axis::Y, Axis::Z}) CHECK(parse_axis(to_string(a)) == a);
  for (GridKind k : {GridKind::Uniform, GridKind::Normal}) CHECK(parse_grid_kind(to_string(k)) == k);
  CHECK_THROWS(parse_axis("w"));
}
