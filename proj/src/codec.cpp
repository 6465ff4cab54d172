#include "dor/codec.hpp"

#include <algorithm>
#include <cmath>

namespace dor {

JointBoundsError::JointBoundsError(std::size_t joint, Axis axis, double value)
    : std::out_of_range("joint " + std::to_string(joint) + " axis " + to_string(axis) +
                        " coordinate " + std::to_string(value) + " out of bounds"),
      joint_(joint),
      axis_(axis) {}

void validate_joints(const JointSet& joints, const ImageGeometry& geom) {
  auto inside = [](double v, double hi) { return v >= 0.0 && v < hi; };
  for (std::size_t a = 0; a < joints.size(); ++a) {
    const Joint3& j = joints[a];
    if (!inside(j.x, static_cast<double>(geom.width()))) throw JointBoundsError(a, Axis::X, j.x);
    if (!inside(j.y, static_cast<double>(geom.height()))) throw JointBoundsError(a, Axis::Y, j.y);
    if (!inside(j.z, geom.depth_range())) throw JointBoundsError(a, Axis::Z, j.z);
  }
}

MapDims map_dims(const GridSet& grids, const ImageGeometry& geom, std::size_t joints) {
  if (grids.x.upper_bound() != static_cast<double>(geom.width()) ||
      grids.y.upper_bound() != static_cast<double>(geom.height()) ||
      grids.z.upper_bound() != geom.depth_range()) {
    throw std::invalid_argument("grid extents do not match image geometry");
  }
  return {geom.feature_height(), geom.feature_width(), grids.x.size(),
          grids.y.size(),        grids.z.size(),       joints};
}

ProbabilityMaps encode_gt(const JointSet& joints, const GridSet& grids, const ImageGeometry& geom) {
  validate_joints(joints, geom);
  ProbabilityMaps maps(map_dims(grids, geom, joints.size()));
  const MapDims& d = maps.dims;
  for (std::size_t a = 0; a < d.joints; ++a) {
    const Joint3& j = joints[a];
    for (std::size_t k = 0; k < d.kx; ++k) {
      const double bit = j.x >= grids.x.threshold(k) ? 1.0 : 0.0;
      for (std::size_t i = 0; i < d.rows; ++i) maps.px(i, k, a) = bit;
    }
    for (std::size_t k = 0; k < d.ky; ++k) {
      const double bit = j.y >= grids.y.threshold(k) ? 1.0 : 0.0;
      for (std::size_t c = 0; c < d.cols; ++c) maps.py(k, c, a) = bit;
    }
    for (std::size_t k = 0; k < d.kz; ++k) {
      const double bit = j.z >= grids.z.threshold(k) ? 1.0 : 0.0;
      for (std::size_t i = 0; i < d.rows; ++i)
        for (std::size_t c = 0; c < d.cols; ++c) maps.pz(i, c, k, a) = bit;
    }
  }
  return maps;
}

JointSet decode(const ProbabilityMaps& maps, const GridSet& grids, const ImageGeometry& geom) {
  const MapDims expect = map_dims(grids, geom, maps.dims.joints);
  if (!(maps.dims == expect) || maps.x.size() != expect.x_size() ||
      maps.y.size() != expect.y_size() || maps.z.size() != expect.z_size()) {
    throw std::invalid_argument("decode: probability map shapes do not match grids/geometry");
  }
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double p) { return !std::isnan(p); });
  };
  if (!finite(maps.x) || !finite(maps.y) || !finite(maps.z)) {
    throw std::domain_error("decode: NaN in probability maps");
  }

  const MapDims& d = maps.dims;
  JointSet out(d.joints);
  for (std::size_t a = 0; a < d.joints; ++a) {
    double sx = 0.0;
    for (std::size_t i = 0; i < d.rows; ++i)
      for (std::size_t k = 0; k < d.kx; ++k) sx += maps.px(i, k, a) * grids.x.interval(k);
    double sy = 0.0;
    for (std::size_t k = 0; k < d.ky; ++k)
      for (std::size_t c = 0; c < d.cols; ++c) sy += maps.py(k, c, a) * grids.y.interval(k);
    double sz = 0.0;
    for (std::size_t i = 0; i < d.rows; ++i)
      for (std::size_t c = 0; c < d.cols; ++c)
        for (std::size_t k = 0; k < d.kz; ++k) sz += maps.pz(i, c, k, a) * grids.z.interval(k);
    out[a] = {sx / static_cast<double>(d.rows), sy / static_cast<double>(d.cols),
              sz / static_cast<double>(d.rows * d.cols)};
  }
  return out;
}

RoundtripStats roundtrip_error(const JointSet& joints, const GridSet& grids,
                               const ImageGeometry& geom) {
  RoundtripStats s;
  if (joints.empty()) return s;
  const JointSet back = decode(encode_gt(joints, grids, geom), grids, geom);
  auto accumulate = [&](AxisErrorStats& st, double err, bool first) {
    st.max = first ? err : std::max(st.max, err);
    st.mean += err;
  };
  for (std::size_t a = 0; a < joints.size(); ++a) {
    accumulate(s.x, back[a].x - joints[a].x, a == 0);
    accumulate(s.y, back[a].y - joints[a].y, a == 0);
    accumulate(s.z, back[a].z - joints[a].z, a == 0);
  }
  const double n = static_cast<double>(joints.size());
  s.x.mean /= n;
  s.y.mean /= n;
  s.z.mean /= n;
  return s;
}

}  // namespace dor
