#include "dor/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "dor/diagnostics.hpp"

namespace dor {

ImageGeometry::ImageGeometry(std::size_t width, std::size_t height, double depth_range,
                             std::size_t stride)
    : width_(width), height_(height), depth_range_(depth_range), stride_(stride) {
  if (width == 0 || height == 0) throw std::invalid_argument("ImageGeometry: zero image dimension");
  if (!(depth_range > 0.0) || !std::isfinite(depth_range)) {
    throw std::invalid_argument("ImageGeometry: depth range must be positive");
  }
  if (stride == 0) throw std::invalid_argument("ImageGeometry: zero stride");
  if (width % stride != 0 || height % stride != 0) {
    throw std::invalid_argument("ImageGeometry: " + std::to_string(width) + "x" +
                                std::to_string(height) + " not divisible by stride " +
                                std::to_string(stride));
  }
}

UVMap::UVMap(const ImageGeometry& geom)
    : width_(geom.width()),
      height_(geom.height()),
      u_(width_ * height_),
      v_(width_ * height_) {
  const double w = static_cast<double>(width_);
  const double h = static_cast<double>(height_);
  for (std::size_t i = 0; i < height_; ++i) {
    for (std::size_t j = 0; j < width_; ++j) {
      u_[i * width_ + j] = static_cast<double>(j) / w;
      v_[i * width_ + j] = static_cast<double>(i) / h;
    }
  }
}

UVMap make_uvmap(const ImageGeometry& geom) { return UVMap(geom); }

double normalize_depth(double raw, const ImageGeometry& geom) {
  const double d = geom.depth_range();
  if (!(raw >= 0.0)) {  // also catches NaN
    diag::count(diag::Warning::DepthClamped);
    return 0.0;
  }
  if (raw > d) {
    diag::count(diag::Warning::DepthClamped);
    return 1.0;
  }
  return raw / d;
}

double denormalize_depth(double normalized, const ImageGeometry& geom) {
  return normalized * geom.depth_range();
}

namespace {

void check_dims(const DepthImage& depth, const ImageGeometry& geom) {
  if (depth.width != geom.width() || depth.height != geom.height() ||
      depth.values.size() != depth.width * depth.height) {
    throw std::invalid_argument("depth image " + std::to_string(depth.width) + "x" +
                                std::to_string(depth.height) + " does not match geometry " +
                                std::to_string(geom.width()) + "x" +
                                std::to_string(geom.height()));
  }
}

}  // namespace

nn::Tensor augment_input(const DepthImage& depth, const UVMap& uv, const ImageGeometry& geom) {
  check_dims(depth, geom);
  if (uv.width() != geom.width() || uv.height() != geom.height()) {
    throw std::invalid_argument("UV map dimensions do not match geometry");
  }
  const std::size_t h = geom.height(), w = geom.width();
  nn::Tensor out({h, w, 3});
  auto data = out.data();
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const std::size_t p = (i * w + j) * 3;
      data[p] = normalize_depth(depth.at(i, j), geom);
      data[p + 1] = uv.u(i, j);
      data[p + 2] = uv.v(i, j);
    }
  }
  return out;
}

nn::Tensor depth_only_input(const DepthImage& depth, const ImageGeometry& geom) {
  check_dims(depth, geom);
  const std::size_t h = geom.height(), w = geom.width();
  nn::Tensor out({h, w, 1});
  auto data = out.data();
  for (std::size_t p = 0; p < h * w; ++p) data[p] = normalize_depth(depth.values[p], geom);
  return out;
}

}  // namespace dor
