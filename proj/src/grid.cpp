#include "dor/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dor/diagnostics.hpp"

namespace dor {

std::string to_string(Axis axis) {
  switch (axis) {
    case Axis::X: return "x";
    case Axis::Y: return "y";
    case Axis::Z: return "z";
  }
  return "?";
}

std::string to_string(GridKind kind) { return kind == GridKind::Uniform ? "uniform" : "normal"; }

Axis parse_axis(const std::string& s) {
  if (s == "x" || s == "X") return Axis::X;
  if (s == "y" || s == "Y") return Axis::Y;
  if (s == "z" || s == "Z") return Axis::Z;
  throw std::invalid_argument("unknown axis '" + s + "'");
}

GridKind parse_grid_kind(const std::string& s) {
  if (s == "uniform" || s == "ud") return GridKind::Uniform;
  if (s == "normal" || s == "nd") return GridKind::Normal;
  throw std::invalid_argument("unknown grid kind '" + s + "'");
}

DiscretizationGrid::DiscretizationGrid(Axis axis, GridKind kind, std::vector<double> thresholds,
                                       double upper_bound)
    : axis_(axis), kind_(kind), thresholds_(std::move(thresholds)), upper_bound_(upper_bound) {
  if (thresholds_.size() < 2) {
    throw std::invalid_argument("DiscretizationGrid: need at least 2 thresholds");
  }
  if (thresholds_.front() != 0.0) throw std::invalid_argument("DiscretizationGrid: t_0 must be 0");
  if (!(upper_bound_ > thresholds_.back())) {
    throw std::invalid_argument("DiscretizationGrid: last threshold must lie below the upper bound");
  }
  intervals_.resize(thresholds_.size());
  for (std::size_t k = 0; k < thresholds_.size(); ++k) {
    intervals_[k] = next_threshold(k) - thresholds_[k];
    if (!(intervals_[k] > 0.0)) {
      throw std::invalid_argument("DiscretizationGrid: thresholds must be strictly increasing");
    }
  }
}

double DiscretizationGrid::max_interval() const {
  return *std::max_element(intervals_.begin(), intervals_.end());
}

double DiscretizationGrid::min_interval() const {
  return *std::min_element(intervals_.begin(), intervals_.end());
}

std::size_t DiscretizationGrid::locate(double v) const {
  if (!(v >= 0.0)) {
    diag::count(diag::Warning::LocateClamped);
    return 0;
  }
  if (v >= upper_bound_) {
    diag::count(diag::Warning::LocateClamped);
    return thresholds_.size() - 1;
  }
  auto it = std::upper_bound(thresholds_.begin(), thresholds_.end(), v);
  return static_cast<std::size_t>(it - thresholds_.begin()) - 1;
}

DiscretizationGrid uniform_grid(Axis axis, double extent, std::size_t count) {
  if (count < 2) throw std::invalid_argument("uniform_grid: K must be at least 2");
  if (!(extent > 0.0)) throw std::invalid_argument("uniform_grid: extent must be positive");
  std::vector<double> t(count);
  for (std::size_t k = 0; k < count; ++k) {
    t[k] = static_cast<double>(k) * extent / static_cast<double>(count);
  }
  return DiscretizationGrid(axis, GridKind::Uniform, std::move(t), extent);
}

DiscretizationGrid normal_grid(double depth_range, int levels) {
  if (levels < 1) throw std::invalid_argument("normal_grid: levels must be at least 1");
  if (levels > 30) throw std::invalid_argument("normal_grid: levels too large");
  if (!(depth_range > 0.0)) throw std::invalid_argument("normal_grid: depth range must be positive");

  const double half = depth_range / 2.0;
  const double coarse = half / levels;
  std::vector<double> lower;
  lower.reserve((std::size_t{1} << levels) - 1);
  for (int m = 0; m < levels; ++m) {
    const std::size_t points = std::size_t{1} << m;
    const double left = coarse * m;
    const double step = coarse / static_cast<double>(points);
    for (std::size_t p = 0; p < points; ++p) lower.push_back(left + step * static_cast<double>(p));
  }

  std::vector<double> t = lower;
  t.push_back(half);
  for (auto it = lower.rbegin(); it != lower.rend(); ++it) {
    if (*it > 0.0) t.push_back(depth_range - *it);
  }
  return DiscretizationGrid(Axis::Z, GridKind::Normal, std::move(t), depth_range);
}

LevelChoice kz_to_levels(std::size_t target) {
  auto count_for = [](int m) { return 2 * ((std::size_t{1} << m) - 1); };
  int best = 1;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int m = 1; m <= 30; ++m) {
    const double gap = std::abs(static_cast<double>(count_for(m)) - static_cast<double>(target));
    // Ties go to the finer grid.
    if (gap <= best_gap) {
      best_gap = gap;
      best = m;
    }
    if (count_for(m) > target) break;
  }
  return {best, count_for(best)};
}

GridSet default_grids(const ImageGeometry& geom, GridKind z_kind) {
  const std::size_t kz_target =
      std::max<std::size_t>(2, static_cast<std::size_t>(geom.depth_range() / 4.0));
  const LevelChoice lv = kz_to_levels(kz_target);
  auto x = uniform_grid(Axis::X, static_cast<double>(geom.width()), geom.width() / 2);
  auto y = uniform_grid(Axis::Y, static_cast<double>(geom.height()), geom.height() / 2);
  if (z_kind == GridKind::Normal) {
    return {std::move(x), std::move(y), normal_grid(geom.depth_range(), lv.levels)};
  }
  return {std::move(x), std::move(y), uniform_grid(Axis::Z, geom.depth_range(), lv.achieved)};
}

}  // namespace dor
