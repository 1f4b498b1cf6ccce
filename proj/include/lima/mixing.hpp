#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lima/common.hpp"
#include "lima/pointcloud.hpp"

namespace lima {

// ---------------------------------------------------------------------------
// Cross-sequence scene mixing
// ---------------------------------------------------------------------------

/// A blended cloud plus the bookkeeping needed to look up per-point
/// distillation targets in the source frames: which input cloud each point
/// came from (0 = a, 1 = b) and its index there.
struct MixedCloud {
  PointCloud cloud;
  std::vector<std::uint8_t> source;          // 0 = from a, 1 = from b
  std::vector<std::uint32_t> origin_index;   // index into the source cloud
};

/// Per-point targets for a mixed scene: every point is trained against the
/// memory-fused feature it had in its own source sequence.
struct MixedScene {
  PointCloud cloud;
  FeatureMatrix source_targets;
};

namespace detail {

inline double inclination(const PointCloud& c, std::size_t i) {
  const Vec3 p = c.point(i);
  return std::atan2(p.z, std::sqrt(p.x * p.x + p.y * p.y));
}

inline double azimuth(const PointCloud& c, std::size_t i) {
  const Vec3 p = c.point(i);
  return std::atan2(p.y, p.x);
}

}  // namespace detail

/// Partitions inclination (elevation from the sensor origin) into
/// `num_bands` contiguous bands over [-pi/2, pi/2]; alternate bands take
/// points from a and b. `rng` draws the phase deciding which source takes
/// the even bands.
inline MixedCloud lasermix(const PointCloud& a, const PointCloud& b,
                           int num_bands, Rng& rng) {
  if (num_bands < 2) throw InvalidInputError("lasermix: num_bands must be >= 2");
  const int phase = int(rng.below(2));
  const double lo = -1.5707963267948966, hi = 1.5707963267948966;
  const double band_width = (hi - lo) / num_bands;

  auto band_of = [&](double angle) {
    int band = int(std::floor((angle - lo) / band_width));
    if (band < 0) band = 0;
    if (band >= num_bands) band = num_bands - 1;
    return band;
  };

  MixedCloud out;
  auto take = [&](const PointCloud& src, std::uint8_t tag, int parity) {
    for (std::size_t i = 0; i < src.size(); ++i)
      if (band_of(detail::inclination(src, i)) % 2 == parity) {
        out.cloud.append_from(src, i);
        out.source.push_back(tag);
        out.origin_index.push_back(std::uint32_t(i));
      }
  };
  take(a, 0, phase);
  take(b, 1, 1 - phase);
  return out;
}

/// Scene-level sector swap: points of `a` inside the azimuth sector
/// [start, start + extent) are replaced by the points of `b` from that
/// sector. Extent 2*pi swaps everything.
inline MixedCloud polarmix_swap(const PointCloud& a, const PointCloud& b,
                                double azimuth_start, double azimuth_extent) {
  const double two_pi = 6.283185307179586;
  if (azimuth_extent <= 0.0 || azimuth_extent > two_pi)
    throw InvalidInputError("polarmix_swap: extent must be in (0, 2*pi]");

  auto in_sector = [&](double angle) {
    if (azimuth_extent >= two_pi) return true;
    double rel = std::fmod(angle - azimuth_start, two_pi);
    if (rel < 0.0) rel += two_pi;
    return rel < azimuth_extent;
  };

  MixedCloud out;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!in_sector(detail::azimuth(a, i))) {
      out.cloud.append_from(a, i);
      out.source.push_back(0);
      out.origin_index.push_back(std::uint32_t(i));
    }
  for (std::size_t i = 0; i < b.size(); ++i)
    if (in_sector(detail::azimuth(b, i))) {
      out.cloud.append_from(b, i);
      out.source.push_back(1);
      out.origin_index.push_back(std::uint32_t(i));
    }
  return out;
}

/// Assembles per-point distillation targets for a mixed cloud: row i of
/// `fused_a` / `fused_b` must be the memory-fused feature of point i of the
/// respective source cloud.
inline MixedScene build_mixed_targets(const MixedCloud& mixed,
                                      const FeatureMatrix& fused_a,
                                      const FeatureMatrix& fused_b) {
  const std::size_t n = mixed.cloud.size();
  if (mixed.source.size() != n || mixed.origin_index.size() != n)
    throw InvalidInputError("build_mixed_targets: inconsistent mixed cloud");
  const std::size_t cols = fused_a.cols() ? fused_a.cols() : fused_b.cols();
  if (fused_a.cols() && fused_b.cols() && fused_a.cols() != fused_b.cols())
    throw InvalidInputError("build_mixed_targets: feature dimension mismatch");

  MixedScene scene;
  scene.cloud = mixed.cloud;
  scene.source_targets = FeatureMatrix(n, cols);
  for (std::size_t i = 0; i < n; ++i) {
    const FeatureMatrix& src = mixed.source[i] == 0 ? fused_a : fused_b;
    const std::uint32_t j = mixed.origin_index[i];
    if (j >= src.rows())
      throw ConsistencyError(
          "build_mixed_targets: mixed point has no source feature");
    const auto from = src.row(j);
    auto to = scene.source_targets.row(i);
    std::copy(from.begin(), from.end(), to.begin());
  }
  return scene;
}

}  // namespace lima
