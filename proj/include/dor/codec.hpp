#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dor/geometry.hpp"
#include "dor/grid.hpp"

namespace dor {

// x and y in pixels (x along columns), z in depth units.
struct Joint3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Joint3&, const Joint3&) = default;
};

using JointSet = std::vector<Joint3>;

class JointBoundsError : public std::out_of_range {
 public:
  JointBoundsError(std::size_t joint, Axis axis, double value);
  std::size_t joint() const { return joint_; }
  Axis axis() const { return axis_; }

 private:
  std::size_t joint_;
  Axis axis_;
};

// Throws JointBoundsError for the first coordinate outside [0,W) x [0,H) x [0,D).
void validate_joints(const JointSet& joints, const ImageGeometry& geom);

struct MapDims {
  std::size_t rows;    // H/s
  std::size_t cols;    // W/s
  std::size_t kx, ky, kz;
  std::size_t joints;  // A

  std::size_t x_size() const { return rows * kx * joints; }
  std::size_t y_size() const { return ky * cols * joints; }
  std::size_t z_size() const { return rows * cols * kz * joints; }

  friend bool operator==(const MapDims&, const MapDims&) = default;
};

MapDims map_dims(const GridSet& grids, const ImageGeometry& geom, std::size_t joints);

// Per-joint ordinal probability maps, row-major in the index order of the
// accessors: x is (rows, kx, A), y is (ky, cols, A), z is (rows, cols, kz, A).
// Entry (.., k, .., a) estimates P(J^a >= t_k) on the matching axis.
struct ProbabilityMaps {
  MapDims dims{};
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> z;

  ProbabilityMaps() = default;
  explicit ProbabilityMaps(MapDims d, double fill = 0.0)
      : dims(d), x(d.x_size(), fill), y(d.y_size(), fill), z(d.z_size(), fill) {}

  double& px(std::size_t i, std::size_t k, std::size_t a) {
    return x[(i * dims.kx + k) * dims.joints + a];
  }
  double px(std::size_t i, std::size_t k, std::size_t a) const {
    return x[(i * dims.kx + k) * dims.joints + a];
  }
  double& py(std::size_t k, std::size_t j, std::size_t a) {
    return y[(k * dims.cols + j) * dims.joints + a];
  }
  double py(std::size_t k, std::size_t j, std::size_t a) const {
    return y[(k * dims.cols + j) * dims.joints + a];
  }
  double& pz(std::size_t i, std::size_t j, std::size_t k, std::size_t a) {
    return z[((i * dims.cols + j) * dims.kz + k) * dims.joints + a];
  }
  double pz(std::size_t i, std::size_t j, std::size_t k, std::size_t a) const {
    return z[((i * dims.cols + j) * dims.kz + k) * dims.joints + a];
  }
};

// Ground-truth binary maps: entry is 1 iff J >= t_k, replicated over the
// non-threshold spatial axes.
ProbabilityMaps encode_gt(const JointSet& joints, const GridSet& grids, const ImageGeometry& geom);

// Interval-weighted sum of probabilities along the threshold axis, averaged
// over the replicated spatial positions.
JointSet decode(const ProbabilityMaps& maps, const GridSet& grids, const ImageGeometry& geom);

struct AxisErrorStats {
  double max = 0.0;
  double mean = 0.0;
};

struct RoundtripStats {
  AxisErrorStats x, y, z;
};

// Signed statistics of decode(encode(J)) - J per axis.
RoundtripStats roundtrip_error(const JointSet& joints, const GridSet& grids,
                               const ImageGeometry& geom);

}  // namespace dor
