#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "lima/common.hpp"

namespace lima {

// ---------------------------------------------------------------------------
// Small fixed-size linear algebra
// ---------------------------------------------------------------------------

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }

  friend bool operator==(const Vec3& a, const Vec3& b) {
    return a.x == b.x && a.y == b.y && a.z == b.z;
  }
};

// Row-major 3x3 matrix.
struct Mat3 {
  double m[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};

  static Mat3 identity() { return {{1, 0, 0, 0, 1, 0, 0, 0, 1}}; }

  static Mat3 rotation_z(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {{c, -s, 0, s, c, 0, 0, 0, 1}};
  }

  static Mat3 diagonal(double a, double b, double c) {
    return {{a, 0, 0, 0, b, 0, 0, 0, c}};
  }

  double at(int r, int c) const { return m[3 * r + c]; }
  double& at(int r, int c) { return m[3 * r + c]; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += at(i, k) * o.at(k, j);
        r.at(i, j) = s;
      }
    return r;
  }

  Mat3 transpose() const {
    return {{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
  }

  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) -
           m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }

  Mat3 inverse() const {
    const double d = det();
    Mat3 r;
    r.m[0] = (m[4] * m[8] - m[5] * m[7]) / d;
    r.m[1] = (m[2] * m[7] - m[1] * m[8]) / d;
    r.m[2] = (m[1] * m[5] - m[2] * m[4]) / d;
    r.m[3] = (m[5] * m[6] - m[3] * m[8]) / d;
    r.m[4] = (m[0] * m[8] - m[2] * m[6]) / d;
    r.m[5] = (m[2] * m[3] - m[0] * m[5]) / d;
    r.m[6] = (m[3] * m[7] - m[4] * m[6]) / d;
    r.m[7] = (m[1] * m[6] - m[0] * m[7]) / d;
    r.m[8] = (m[0] * m[4] - m[1] * m[3]) / d;
    return r;
  }

  friend bool operator==(const Mat3& a, const Mat3& b) {
    for (int i = 0; i < 9; ++i)
      if (a.m[i] != b.m[i]) return false;
    return true;
  }
};

// ---------------------------------------------------------------------------
// Rigid transforms
// ---------------------------------------------------------------------------

/// Rotation + translation. Maps points as x -> rotation * x + translation.
struct RigidPose {
  Mat3 rotation = Mat3::identity();
  Vec3 translation;

  static RigidPose identity() { return {}; }

  friend bool operator==(const RigidPose& a, const RigidPose& b) {
    return a.rotation == b.rotation && a.translation == b.translation;
  }
};

inline Vec3 apply(const RigidPose& p, const Vec3& x) {
  return p.rotation * x + p.translation;
}

inline RigidPose compose(const RigidPose& a, const RigidPose& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline RigidPose inverse(const RigidPose& p) {
  Mat3 rt = p.rotation.transpose();
  return {rt, rt * (p.translation * -1.0)};
}

// ---------------------------------------------------------------------------
// Camera model and projection
// ---------------------------------------------------------------------------

/// Pinhole camera. `extrinsics` maps the LiDAR/ego frame to the camera frame
/// (x right, y down, z forward); `intrinsics` maps camera-frame points to
/// pixel coordinates.
struct CameraModel {
  Mat3 intrinsics = Mat3::identity();
  RigidPose extrinsics;
  int width = 0;
  int height = 0;
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;  // camera-frame z, meters
};

struct Correspondence {
  std::uint32_t point_index = 0;
  std::uint32_t camera_index = 0;
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

// Points closer than this to the camera plane are treated as behind it.
inline constexpr double kNearPlaneEpsilon = 1e-6;

/// Projects ego-frame points into the image. Per point: extrinsics, then
/// intrinsics, then division by camera-frame z. Returns nullopt for points
/// behind the near plane or outside the half-open image bounds
/// [0,W) x [0,H).
inline std::vector<std::optional<Projection>> project_points(
    std::span<const Vec3> points, const CameraModel& camera) {
  std::vector<std::optional<Projection>> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3& p = points[i];
    if (!p.finite()) throw InvalidInputError("project_points: non-finite coordinate");
    const Vec3 cam = apply(camera.extrinsics, p);
    if (cam.z <= kNearPlaneEpsilon) continue;
    const Vec3 q = camera.intrinsics * cam;
    const double u = q.x / cam.z;
    const double v = q.y / cam.z;
    if (u < 0.0 || u >= double(camera.width) || v < 0.0 ||
        v >= double(camera.height))
      continue;
    out[i] = Projection{u, v, cam.z};
  }
  return out;
}

/// Inverse of project_points for a valid (u, v, depth): back through the
/// intrinsics, then the inverse extrinsics.
inline Vec3 backproject(const CameraModel& camera, double u, double v,
                        double depth) {
  const Vec3 cam = camera.intrinsics.inverse() * Vec3{u * depth, v * depth, depth};
  return apply(inverse(camera.extrinsics), cam);
}

/// One Correspondence per (point, camera) pair with a valid projection. A
/// point visible in several overlapping cameras appears once per camera;
/// points visible nowhere contribute nothing.
inline std::vector<Correspondence> build_correspondences(
    std::span<const Vec3> points, std::span<const CameraModel> cameras) {
  if (cameras.empty())
    throw InvalidInputError("build_correspondences: no cameras");
  std::vector<Correspondence> out;
  for (std::size_t c = 0; c < cameras.size(); ++c) {
    const auto projs = project_points(points, cameras[c]);
    for (std::size_t i = 0; i < projs.size(); ++i) {
      if (!projs[i]) continue;
      out.push_back(Correspondence{std::uint32_t(i), std::uint32_t(c),
                                   projs[i]->u, projs[i]->v, projs[i]->depth});
    }
  }
  return out;
}

}  // namespace lima
