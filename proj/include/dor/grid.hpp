#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dor/geometry.hpp"

namespace dor {

enum class Axis { X, Y, Z };
enum class GridKind { Uniform, Normal };

std::string to_string(Axis axis);
std::string to_string(GridKind kind);
Axis parse_axis(const std::string& s);
GridKind parse_grid_kind(const std::string& s);

// Ordered thresholds t_0 = 0 < t_1 < ... < t_{K-1} < upper_bound along one axis.
// The interval after the last threshold ends at the upper bound, so the
// interval lengths telescope to the upper bound.
class DiscretizationGrid {
 public:
  DiscretizationGrid(Axis axis, GridKind kind, std::vector<double> thresholds, double upper_bound);

  Axis axis() const { return axis_; }
  GridKind kind() const { return kind_; }
  std::size_t size() const { return thresholds_.size(); }
  double upper_bound() const { return upper_bound_; }

  std::span<const double> thresholds() const { return thresholds_; }
  std::span<const double> intervals() const { return intervals_; }
  double threshold(std::size_t k) const { return thresholds_[k]; }
  double interval(std::size_t k) const { return intervals_[k]; }
  // t_{k+1}, with t_K being the upper bound.
  double next_threshold(std::size_t k) const {
    return k + 1 < thresholds_.size() ? thresholds_[k + 1] : upper_bound_;
  }
  double max_interval() const;
  double min_interval() const;

  // Index m with t_m <= v < t_{m+1}. Values outside [0, upper_bound) are
  // clamped to the nearest valid index and counted as a LocateClamped warning.
  std::size_t locate(double v) const;

 private:
  Axis axis_;
  GridKind kind_;
  std::vector<double> thresholds_;
  std::vector<double> intervals_;
  double upper_bound_;
};

// t_k = k * extent / K.
DiscretizationGrid uniform_grid(Axis axis, double extent, std::size_t count);

// Depth thresholds denser toward D/2. Each half of [0, D) is cut into `levels`
// equal coarse pieces; the m-th piece toward the midpoint carries 2^m evenly
// spaced, left-anchored points. The upper half is the mirror image of the lower
// half about D/2, plus D/2 itself. K = 2 (2^levels - 1).
DiscretizationGrid normal_grid(double depth_range, int levels);

struct LevelChoice {
  int levels;
  std::size_t achieved;
};

// Level count whose threshold count 2 (2^M - 1) is nearest to the target.
LevelChoice kz_to_levels(std::size_t target);

struct GridSet {
  DiscretizationGrid x;
  DiscretizationGrid y;
  DiscretizationGrid z;
};

// K_x = W/2, K_y = H/2, K_z snapped from D/4. A uniform z grid uses the same
// count the normal grid would achieve so the two are comparable.
GridSet default_grids(const ImageGeometry& geom, GridKind z_kind);

}  // namespace dor
