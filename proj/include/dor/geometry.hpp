#pragma once

#include <cstddef>
#include <vector>

#include "dor/tensor.hpp"

namespace dor {

// Cropped frame dimensions. Rows index y in [0,H), columns index x in [0,W),
// depth z in [0,D]. Feature and probability maps live at (H/stride, W/stride).
class ImageGeometry {
 public:
  ImageGeometry(std::size_t width, std::size_t height, double depth_range, std::size_t stride = 32);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  double depth_range() const { return depth_range_; }
  std::size_t stride() const { return stride_; }
  std::size_t feature_width() const { return width_ / stride_; }
  std::size_t feature_height() const { return height_ / stride_; }

  friend bool operator==(const ImageGeometry&, const ImageGeometry&) = default;

 private:
  std::size_t width_;
  std::size_t height_;
  double depth_range_;
  std::size_t stride_;
};

// Single-channel depth image in native depth units, row-major H x W.
struct DepthImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> values;

  float at(std::size_t row, std::size_t col) const { return values[row * width + col]; }
  float& at(std::size_t row, std::size_t col) { return values[row * width + col]; }
};

// Normalized pixel coordinate maps: U(i,j) = j/W, V(i,j) = i/H.
class UVMap {
 public:
  explicit UVMap(const ImageGeometry& geom);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  double u(std::size_t row, std::size_t col) const { return u_[row * width_ + col]; }
  double v(std::size_t row, std::size_t col) const { return v_[row * width_ + col]; }

 private:
  std::size_t width_;
  std::size_t height_;
  std::vector<double> u_;
  std::vector<double> v_;
};

UVMap make_uvmap(const ImageGeometry& geom);

// raw/D, clamped into [0,1]. Out-of-range input counts a DepthClamped warning.
double normalize_depth(double raw, const ImageGeometry& geom);
double denormalize_depth(double normalized, const ImageGeometry& geom);

// H x W x 3 tensor: normalized depth, U, V.
nn::Tensor augment_input(const DepthImage& depth, const UVMap& uv, const ImageGeometry& geom);
// H x W x 1 tensor holding normalized depth only (input without coordinate maps).
nn::Tensor depth_only_input(const DepthImage& depth, const ImageGeometry& geom);

}  // namespace dor
