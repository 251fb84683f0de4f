#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "desksplat/error.hpp"
#include "desksplat/geometry.hpp"

namespace desksplat {

/// Row-major H x W image. Pixel (row, col) has its center at
/// (u, v) = (col + 0.5, row + 0.5).
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, const T& fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int row, int col) { return data_[index(row, col)]; }
  const T& operator()(int row, int col) const { return data_[index(row, col)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  const std::vector<T>& data() const { return data_; }
  std::vector<T>& data() { return data_; }

  bool same_shape(int width, int height) const { return width_ == width && height_ == height; }
  template <typename U>
  bool same_shape(const Image<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// RGB in [0, 1].
using ColorImage = Image<Vec3>;
/// Meters, 0 marks an invalid measurement.
using DepthImage = Image<double>;
using ScalarImage = Image<double>;

struct Frame {
  int id = 0;
  double timestamp = 0.0;
  ColorImage color;
  DepthImage depth;
  CameraIntrinsics intrinsics;

  bool valid() const {
    if (!intrinsics.valid()) return false;
    if (!color.same_shape(intrinsics.width, intrinsics.height)) return false;
    if (!depth.same_shape(intrinsics.width, intrinsics.height)) return false;
    for (double d : depth.data()) {
      if (!(d >= 0.0) || !std::isfinite(d)) return false;
    }
    return true;
  }
};

/// Depth lookup at a sub-pixel location by bilinear interpolation of inverse
/// depth over the four surrounding pixel centers. Inverse depth is affine in
/// (u, v) over a plane, so the lookup is exact on planar patches. Returns 0
/// when any of the four neighbors is invalid or when they straddle a depth
/// discontinuity (max/min ratio above `max_ratio`).
inline double sample_depth(const DepthImage& depth, double u, double v, double max_ratio = 1.1) {
  const double x = u - 0.5;
  const double y = v - 0.5;
  const int w = depth.width();
  const int h = depth.height();
  int c0 = static_cast<int>(std::floor(x));
  int r0 = static_cast<int>(std::floor(y));
  c0 = std::clamp(c0, 0, std::max(0, w - 2));
  r0 = std::clamp(r0, 0, std::max(0, h - 2));
  const int c1 = std::min(c0 + 1, w - 1);
  const int r1 = std::min(r0 + 1, h - 1);
  const double ax = std::clamp(x - c0, 0.0, 1.0);
  const double ay = std::clamp(y - r0, 0.0, 1.0);

  const double d00 = depth(r0, c0);
  const double d01 = depth(r0, c1);
  const double d10 = depth(r1, c0);
  const double d11 = depth(r1, c1);
  const double lo = std::min({d00, d01, d10, d11});
  const double hi = std::max({d00, d01, d10, d11});
  if (!(lo > 0.0) || hi > max_ratio * lo) return 0.0;

  const double inv = (1 - ay) * ((1 - ax) / d00 + ax / d01) + ay * ((1 - ax) / d10 + ax / d11);
  return 1.0 / inv;
}

}  // namespace desksplat
