#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "lima/common.hpp"
#include "lima/encoders.hpp"
#include "lima/geometry.hpp"

namespace lima {

// ---------------------------------------------------------------------------
// FIFO feature memory with ego-motion warping
// ---------------------------------------------------------------------------

/// One past frame: the pose it was captured at, the world-frame coordinates
/// of the points that carried features, and those features.
struct MemoryEntry {
  std::int64_t timestamp = 0;
  RigidPose ego_pose;           // world-from-ego at that time
  std::vector<Vec3> anchors;    // world frame, one per feature row
  FeatureMatrix features;
};

class MemoryBank {
 public:
  explicit MemoryBank(std::size_t capacity = 6) : capacity_(capacity) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::deque<MemoryEntry>& entries() const { return entries_; }

  /// FIFO insert: appends and drops the single oldest entry when over
  /// capacity. Timestamps must be strictly increasing.
  void push(MemoryEntry entry) {
    if (!entries_.empty() && entry.timestamp <= entries_.back().timestamp)
      throw OrderingError("MemoryBank::push: non-increasing timestamp");
    if (capacity_ == 0) return;
    entries_.push_back(std::move(entry));
    if (entries_.size() > capacity_) entries_.pop_front();
  }

  void clear() { entries_.clear(); }

 private:
  std::size_t capacity_;
  std::deque<MemoryEntry> entries_;  // oldest first
};

struct WarpedEntry {
  std::vector<Vec3> anchors;  // current ego frame
  const FeatureMatrix* features = nullptr;
};

/// Maps every stored entry's world-frame anchors into the current ego frame.
/// Features are carried unchanged; the warp is purely geometric.
inline std::vector<WarpedEntry> warp_entries(const MemoryBank& bank,
                                             const RigidPose& current_pose) {
  const RigidPose ego_from_world = inverse(current_pose);
  std::vector<WarpedEntry> out;
  out.reserve(bank.size());
  for (const MemoryEntry& entry : bank.entries()) {
    WarpedEntry w;
    w.anchors.reserve(entry.anchors.size());
    for (const Vec3& a : entry.anchors) w.anchors.push_back(apply(ego_from_world, a));
    w.features = &entry.features;
    out.push_back(std::move(w));
  }
  return out;
}

/// Temporal fusion: each current point collects its own feature plus, from
/// each warped entry, the feature of the nearest warped anchor within
/// `radius` (at most one per entry), and takes the arithmetic mean. The mean
/// is computed as current + mean of differences, so a point whose matches all
/// equal its current feature keeps it bit for bit.
inline FeatureMatrix fuse_long_term(std::span<const Vec3> current_points,
                                    const FeatureMatrix& current_features,
                                    const std::vector<WarpedEntry>& warped,
                                    double radius) {
  if (radius <= 0.0)
    throw InvalidInputError("fuse_long_term: radius must be positive");
  if (current_features.rows() != current_points.size())
    throw InvalidInputError("fuse_long_term: points/features row mismatch");
  if (current_features.rows() == 0) return current_features;
  for (const WarpedEntry& w : warped) {
    if (w.features->rows() != w.anchors.size())
      throw InvalidInputError("fuse_long_term: entry anchors/features mismatch");
    if (!w.features->empty() && w.features->cols() != current_features.cols())
      throw InvalidInputError("fuse_long_term: feature dimension mismatch");
  }

  const std::size_t cols = current_features.cols();
  FeatureMatrix fused = current_features;

  std::vector<detail::NeighborGrid> grids;
  grids.reserve(warped.size());
  for (const WarpedEntry& w : warped)
    grids.emplace_back(std::span<const Vec3>(w.anchors), radius);

  std::vector<std::pair<double, std::uint32_t>> candidates;
  std::vector<double> diff_sum(cols);
  for (std::size_t i = 0; i < current_points.size(); ++i) {
    std::fill(diff_sum.begin(), diff_sum.end(), 0.0);
    std::size_t matched = 0;
    const auto cur = current_features.row(i);
    for (std::size_t e = 0; e < warped.size(); ++e) {
      grids[e].within(current_points[i], radius, candidates);
      if (candidates.empty()) continue;
      std::uint32_t best = candidates[0].second;
      double best_d2 = candidates[0].first;
      for (const auto& [d2, j] : candidates)
        if (d2 < best_d2 || (d2 == best_d2 && j < best)) {
          best_d2 = d2;
          best = j;
        }
      const auto hist = warped[e].features->row(best);
      for (std::size_t d = 0; d < cols; ++d) diff_sum[d] += hist[d] - cur[d];
      ++matched;
    }
    if (matched == 0) continue;
    const double inv = 1.0 / double(matched + 1);
    auto out = fused.row(i);
    for (std::size_t d = 0; d < cols; ++d) out[d] = cur[d] + diff_sum[d] * inv;
  }
  return fused;
}

}  // namespace lima
