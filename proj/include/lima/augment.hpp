#pragma once

#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "lima/common.hpp"
#include "lima/geometry.hpp"
#include "lima/pointcloud.hpp"

namespace lima {

// ---------------------------------------------------------------------------
// Point cloud augmentation
// ---------------------------------------------------------------------------

struct AugmentPolicy {
  double rotation_min = -3.14159265358979312;  // radians, about z
  double rotation_max = 3.14159265358979312;
  double flip_x_prob = 0.5;
  double flip_y_prob = 0.5;
  double scale_min = 0.95;
  double scale_max = 1.05;

  static AugmentPolicy identity() {
    return {0.0, 0.0, 0.0, 0.0, 1.0, 1.0};
  }
};

/// The exact linear map applied by augmentation (scale * flip * rotation).
/// Not a RigidPose: a single-axis flip has determinant -1.
struct CloudTransform {
  Mat3 linear = Mat3::identity();
  Vec3 translation;

  Vec3 apply(const Vec3& p) const { return linear * p + translation; }
};

struct AugmentResult {
  PointCloud cloud;
  CloudTransform transform;
};

/// Random z-rotation, axis flips, and uniform scaling. Labels, intensity and
/// provenance pass through untouched; the applied transform is returned so
/// correspondences can be re-derived.
inline AugmentResult augment_cloud(const PointCloud& cloud, Rng& rng,
                                   const AugmentPolicy& policy) {
  const double angle = rng.uniform(policy.rotation_min, policy.rotation_max);
  const bool flip_x = rng.bernoulli(policy.flip_x_prob);
  const bool flip_y = rng.bernoulli(policy.flip_y_prob);
  const double scale = rng.uniform(policy.scale_min, policy.scale_max);

  const Mat3 flip =
      Mat3::diagonal(flip_x ? -1.0 : 1.0, flip_y ? -1.0 : 1.0, 1.0);
  Mat3 linear = flip * Mat3::rotation_z(angle);
  for (double& v : linear.m) v *= scale;

  AugmentResult out;
  out.transform.linear = linear;
  out.cloud = cloud;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    out.cloud.set_point(i, linear * cloud.point(i));
  return out;
}

// ---------------------------------------------------------------------------
// Cylindrical voxel downsampling
// ---------------------------------------------------------------------------

// Azimuth bins are arc-length matched to `resolution` at this radius.
inline constexpr double kAzimuthReferenceRadius = 10.0;

/// Bins points into (radius, azimuth, z) cells and keeps one representative
/// per occupied cell: the centroid with majority label/provenance and mean
/// intensity. Output order follows first occurrence in the input.
inline PointCloud voxel_downsample_cylindrical(const PointCloud& cloud,
                                               double resolution) {
  if (resolution <= 0.0)
    throw InvalidInputError("voxel_downsample_cylindrical: resolution <= 0");
  if (cloud.size() == 0) return {};

  const double dtheta = resolution / kAzimuthReferenceRadius;

  struct Cell {
    Vec3 sum;
    double intensity_sum = 0.0;
    std::size_t count = 0;
    std::unordered_map<std::uint16_t, std::size_t> labels;
    std::unordered_map<std::uint16_t, std::size_t> provenances;
  };

  std::unordered_map<std::uint64_t, std::size_t> index;
  std::vector<Cell> cells;

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 p = cloud.point(i);
    const double r = std::sqrt(p.x * p.x + p.y * p.y);
    double theta = std::atan2(p.y, p.x);  // (-pi, pi]
    const std::int64_t rb = std::int64_t(std::floor(r / resolution));
    std::int64_t tb = std::int64_t(std::floor((theta + 3.14159265358979312) / dtheta));
    const std::int64_t n_tb =
        std::int64_t(std::ceil(2.0 * 3.14159265358979312 / dtheta));
    if (tb >= n_tb) tb = n_tb - 1;
    if (tb < 0) tb = 0;
    const std::int64_t zb = std::int64_t(std::floor(p.z / resolution));

    const std::uint64_t key = (std::uint64_t(rb) & 0x1fffffull) |
                              ((std::uint64_t(tb) & 0x1fffffull) << 21) |
                              ((std::uint64_t(zb) & 0x3fffffull) << 42);
    auto [it, inserted] = index.try_emplace(key, cells.size());
    if (inserted) cells.emplace_back();
    Cell& cell = cells[it->second];
    cell.sum = cell.sum + p;
    cell.intensity_sum += double(cloud.intensity[i]);
    cell.count += 1;
    cell.labels[cloud.label[i]] += 1;
    cell.provenances[cloud.provenance[i]] += 1;
  }

  auto majority = [](const std::unordered_map<std::uint16_t, std::size_t>& m) {
    std::uint16_t best = 0;
    std::size_t best_count = 0;
    for (const auto& [k, n] : m)
      if (n > best_count || (n == best_count && k < best)) {
        best = k;
        best_count = n;
      }
    return best;
  };

  PointCloud out;
  for (const Cell& cell : cells) {
    const double inv = 1.0 / double(cell.count);
    out.push_point(cell.sum * inv, float(cell.intensity_sum * inv),
                   majority(cell.labels), majority(cell.provenances));
  }
  return out;
}

}  // namespace lima
