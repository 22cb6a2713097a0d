#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "lift3d/error.hpp"
#include "lift3d/geometry.hpp"

namespace lift3d {

using Vec2 = Eigen::Vector2d;

// Pinhole camera looking down +z, image x to the right and y down. Pixel
// (x, y) covers [x, x+1) x [y, y+1); its center is (x + 0.5, y + 0.5).
struct Camera {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 1, height = 1;

  void validate() const {
    require(fx > 0.0 && fy > 0.0, "camera focal lengths must be positive");
    require(width >= 1 && height >= 1, "camera image size must be positive");
  }

  Vec2 project(const Vec3 &p) const {
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
  }

  // Camera-space point at depth z seen through pixel coordinate (u, v).
  Vec3 unproject(double u, double v, double z) const {
    return {(u - cx) / fx * z, (v - cy) / fy * z, z};
  }

  Vec3 pixel_point(int x, int y, double z) const {
    return unproject(x + 0.5, y + 0.5, z);
  }

  // Square-pixel camera with the principal point at the image center.
  static Camera centered(int width, int height, double focal) {
    return {focal, focal, 0.5 * width, 0.5 * height, width, height};
  }
};

// Row-major image of arbitrary pixel type.
template <class T>
struct Image {
  int width = 0, height = 0;
  std::vector<T> pixels;

  Image() = default;
  Image(int w, int h, const T &fill = T{})
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {
    require(w >= 0 && h >= 0, "image dimensions must be non-negative");
  }

  std::size_t size() const { return pixels.size(); }
  bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x);
  }
  T &operator()(int x, int y) { return pixels[index(x, y)]; }
  const T &operator()(int x, int y) const { return pixels[index(x, y)]; }

  template <class U>
  bool same_shape(const Image<U> &other) const {
    return width == other.width && height == other.height;
  }

  bool operator==(const Image &) const = default;
};

using RgbImage = Image<Color>;
using DepthBuffer = Image<double>;  // camera-space z, +inf where empty

// Boolean mask stored one byte per pixel (0 or 1).
struct BinaryMask : Image<std::uint8_t> {
  using Image<std::uint8_t>::Image;

  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : pixels) n += v != 0;
    return n;
  }
  bool test(int x, int y) const { return contains(x, y) && (*this)(x, y) != 0; }
  void set(int x, int y, bool value = true) { (*this)(x, y) = value ? 1 : 0; }

  bool subset_of(const BinaryMask &other) const {
    require(same_shape(other), "mask dimensions differ");
    for (std::size_t i = 0; i < pixels.size(); ++i)
      if (pixels[i] && !other.pixels[i]) return false;
    return true;
  }

  bool operator==(const BinaryMask &) const = default;
};

// Per-pixel camera-space points with a validity flag. Valid points have
// z > 0; invalid pixels carry no meaningful point.
struct Pointmap {
  int width = 0, height = 0;
  std::vector<Vec3> points;
  std::vector<std::uint8_t> valid;

  Pointmap() = default;
  Pointmap(int w, int h)
      : width(w),
        height(h),
        points(static_cast<std::size_t>(w) * h,
               Vec3::Constant(std::numeric_limits<double>::quiet_NaN())),
        valid(static_cast<std::size_t>(w) * h, 0) {}

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x);
  }
  bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
  bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }
  const Vec3 &at(int x, int y) const { return points[index(x, y)]; }

  void set(int x, int y, const Vec3 &p) {
    require(std::isfinite(p.x()) && std::isfinite(p.y()) && p.z() > 0.0 &&
                std::isfinite(p.z()),
            "pointmap points must be finite with z > 0");
    points[index(x, y)] = p;
    valid[index(x, y)] = 1;
  }
  void invalidate(int x, int y) {
    points[index(x, y)] = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
    valid[index(x, y)] = 0;
  }

  // Scene depth, +inf where invalid so that missing geometry never occludes.
  double depth(int x, int y) const {
    return is_valid(x, y) ? at(x, y).z() : std::numeric_limits<double>::infinity();
  }

  template <class U>
  bool same_shape(const Image<U> &img) const {
    return width == img.width && height == img.height;
  }
};

// Pointmap of a scene given by a depth buffer under `camera`.
inline Pointmap pointmap_from_depth(const DepthBuffer &depth, const Camera &camera) {
  Pointmap pm(depth.width, depth.height);
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x)
      if (std::isfinite(depth(x, y)) && depth(x, y) > 0.0)
        pm.set(x, y, camera.pixel_point(x, y, depth(x, y)));
  return pm;
}

}  // namespace lift3d
