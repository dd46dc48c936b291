#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hashfield/common.hpp"

namespace hashfield {

/// Row-major 4x4 camera-to-world transform (OpenGL convention: camera looks down -z, y up).
using Pose = std::array<std::array<double, 4>, 4>;

inline Pose identity_pose() {
  Pose p{};
  for (int i = 0; i < 4; ++i) p[i][i] = 1.0;
  return p;
}

/// Largest deviation of the pose rotation from orthonormality.
inline double rotation_orthonormality_error(const Pose& p) {
  double err = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double d = 0.0;
      for (int k = 0; k < 3; ++k) d += p[k][i] * p[k][j];
      err = std::max(err, std::abs(d - (i == j ? 1.0 : 0.0)));
    }
  }
  return err;
}

inline double rotation_determinant(const Pose& p) {
  return p[0][0] * (p[1][1] * p[2][2] - p[1][2] * p[2][1]) - p[0][1] * (p[1][0] * p[2][2] - p[1][2] * p[2][0]) +
         p[0][2] * (p[1][0] * p[2][1] - p[1][1] * p[2][0]);
}

/// Pinhole intrinsics; the principal point is in continuous pixel units (pixel i spans [i, i+1)).
struct Intrinsics {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  double focal = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  static Intrinsics centered(std::uint32_t w, std::uint32_t h, double focal) {
    return {w, h, focal, 0.5 * w, 0.5 * h};
  }
  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

/// Linear RGB in [0,1], row-major, 3 floats per pixel.
struct Image {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> rgb;

  Image() = default;
  Image(std::uint32_t w, std::uint32_t h) : width(w), height(h), rgb(std::size_t{w} * h * 3, 0.0f) {}

  std::size_t pixel_count() const { return std::size_t{width} * height; }
  Vec3<float> at(std::uint32_t x, std::uint32_t y) const {
    const std::size_t i = (std::size_t{y} * width + x) * 3;
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }
  void set(std::uint32_t x, std::uint32_t y, const Vec3<float>& c) {
    const std::size_t i = (std::size_t{y} * width + x) * 3;
    rgb[i] = c.x;
    rgb[i + 1] = c.y;
    rgb[i + 2] = c.z;
  }
  friend bool operator==(const Image&, const Image&) = default;
};

struct View {
  Pose pose = identity_pose();
  Image image;
  std::string file_path;  ///< as written in the manifest, relative to it
  friend bool operator==(const View& a, const View& b) { return a.pose == b.pose && a.image == b.image; }
};

struct Aabb {
  Vec3<double> min{-1.0, -1.0, -1.0};
  Vec3<double> max{1.0, 1.0, 1.0};
  friend bool operator==(const Aabb&, const Aabb&) = default;
};

struct Scene {
  Intrinsics intrinsics;
  std::vector<View> train_views;
  std::vector<View> test_views;
  double near = 0.1;
  double far = 10.0;
  Aabb bounds;
  Vec3<double> background{0.0, 0.0, 0.0};

  friend bool operator==(const Scene&, const Scene&) = default;
};

}  // namespace hashfield
