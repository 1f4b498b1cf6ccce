#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "lima/common.hpp"

namespace lima {

// ---------------------------------------------------------------------------
// Cross-view aggregation
// ---------------------------------------------------------------------------

enum class AggregationMode { kMean, kMax };

/// Per-camera feature samples of a single point.
struct ViewSamples {
  std::uint32_t point_index = 0;
  std::vector<std::vector<double>> samples;
};

struct CrossViewResult {
  FeatureMatrix features;                     // one row per visible point
  std::vector<std::uint32_t> point_indices;   // owner of each feature row
  std::vector<std::uint8_t> visible;          // over all num_points
};

/// Collapses each point's per-view samples into one unified vector: the
/// per-coordinate mean or maximum over views. Points with no samples are
/// absent from the output and cleared in the visibility mask.
inline CrossViewResult cross_view_aggregate(
    const std::vector<ViewSamples>& samples_per_point, AggregationMode mode,
    std::size_t num_points) {
  std::size_t dim = 0;
  for (const auto& vs : samples_per_point) {
    if (vs.samples.empty())
      throw InvalidInputError("cross_view_aggregate: point " +
                              std::to_string(vs.point_index) +
                              " has no samples");
    if (dim == 0) dim = vs.samples[0].size();
    for (const auto& s : vs.samples)
      if (s.size() != dim)
        throw InvalidInputError("cross_view_aggregate: inconsistent feature dim");
  }

  std::vector<const ViewSamples*> ordered;
  ordered.reserve(samples_per_point.size());
  for (const auto& vs : samples_per_point) ordered.push_back(&vs);
  std::sort(ordered.begin(), ordered.end(),
            [](const ViewSamples* a, const ViewSamples* b) {
              return a->point_index < b->point_index;
            });

  CrossViewResult out;
  out.visible.assign(num_points, 0);
  out.features = FeatureMatrix(ordered.size(), dim);
  for (std::size_t r = 0; r < ordered.size(); ++r) {
    const ViewSamples& vs = *ordered[r];
    out.point_indices.push_back(vs.point_index);
    out.visible[vs.point_index] = 1;
    auto row = out.features.row(r);
    if (mode == AggregationMode::kMean) {
      for (const auto& s : vs.samples)
        for (std::size_t d = 0; d < dim; ++d) row[d] += s[d];
      const double inv = 1.0 / double(vs.samples.size());
      for (std::size_t d = 0; d < dim; ++d) row[d] *= inv;
    } else {
      std::copy(vs.samples[0].begin(), vs.samples[0].end(), row.begin());
      for (std::size_t s = 1; s < vs.samples.size(); ++s)
        for (std::size_t d = 0; d < dim; ++d)
          row[d] = std::max(row[d], vs.samples[s][d]);
    }
  }
  return out;
}

}  // namespace lima
