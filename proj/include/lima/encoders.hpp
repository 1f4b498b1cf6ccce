#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "lima/common.hpp"
#include "lima/geometry.hpp"
#include "lima/pointcloud.hpp"

namespace lima {

// ---------------------------------------------------------------------------
// Frozen image encoder
// ---------------------------------------------------------------------------
//
// Stand-in for the pretrained 2D backbone: a fixed random projection of each
// 3x3 pixel patch (replicated edges) followed by tanh. Weights derive from a
// constant seed, so the teacher is identical in every run and has no mutable
// state. The per-channel mean response is constrained to an orthogonal
// family, which keeps distinct channel signatures separated in feature space
// (the property the distillation targets rely on).

class ImageEncoder {
 public:
  ImageEncoder(int in_channels, int out_channels)
      : in_channels_(in_channels), out_channels_(out_channels) {
    const int fan_in = 9 * in_channels;
    Rng rng(derive_seed(0xF07E4C8ED00ull, std::uint64_t(in_channels),
                        std::uint64_t(out_channels)));
    const double bound = 1.0 / std::sqrt(double(fan_in));
    weights_.resize(std::size_t(out_channels) * fan_in);
    for (double& w : weights_) w = rng.uniform(-bound, bound);
    bias_.assign(std::size_t(out_channels), 0.0);

    // Orthogonalized channel directions (Gram-Schmidt over seeded gaussians).
    std::vector<std::vector<double>> q(in_channels,
                                       std::vector<double>(out_channels));
    for (auto& row : q)
      for (double& v : row) v = rng.normal();
    for (int c = 0; c < in_channels; ++c) {
      for (int p = 0; p < c; ++p) {
        double dot = 0.0;
        for (int o = 0; o < out_channels; ++o) dot += q[c][o] * q[p][o];
        for (int o = 0; o < out_channels; ++o) q[c][o] -= dot * q[p][o];
      }
      double n2 = 0.0;
      for (double v : q[c]) n2 += v * v;
      if (n2 < 1e-12) continue;  // more channels than output dims
      const double inv = 1.0 / std::sqrt(n2);
      for (double& v : q[c]) v *= inv;
    }

    // Recenter each (output, channel) pixel group and install the orthogonal
    // component as its mean, so a channel's 9-pixel sum is exactly q[c][o].
    for (int o = 0; o < out_channels; ++o)
      for (int c = 0; c < in_channels; ++c) {
        double mean = 0.0;
        for (int pix = 0; pix < 9; ++pix)
          mean += weights_[index(o, pix, c)];
        mean /= 9.0;
        const double shift = q[c][o] / 9.0 - mean;
        for (int pix = 0; pix < 9; ++pix)
          weights_[index(o, pix, c)] += shift;
      }
  }

  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }

  /// Feature grid of the same spatial size as the input.
  ImageGrid encode(const ImageGrid& img) const {
    if (img.channels != in_channels_)
      throw InvalidInputError("image_encode: channel mismatch");
    ImageGrid out(img.height, img.width, out_channels_);
    std::vector<double> patch(std::size_t(9) * in_channels_);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        int k = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          const int yy = std::clamp(y + dy, 0, img.height - 1);
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = std::clamp(x + dx, 0, img.width - 1);
            for (int c = 0; c < in_channels_; ++c)
              patch[k++] = double(img.at(yy, xx, c));
          }
        }
        const double* wrow = weights_.data();
        for (int o = 0; o < out_channels_; ++o) {
          double acc = bias_[o];
          for (std::size_t j = 0; j < patch.size(); ++j) acc += wrow[j] * patch[j];
          out.at(y, x, o) = float(std::tanh(acc));
          wrow += patch.size();
        }
      }
    }
    return out;
  }

 private:
  std::size_t index(int out, int pix, int ch) const {
    return (std::size_t(out) * 9 + std::size_t(pix)) * in_channels_ +
           std::size_t(ch);
  }

  int in_channels_;
  int out_channels_;
  std::vector<double> weights_;  // out_channels x (9 * in_channels)
  std::vector<double> bias_;
};

/// Bilinear lookup in a feature grid at source-image coordinates (u, v). The
/// grid may have a different spatial size than the source image; coordinates
/// are scaled by grid/source before interpolating between cell centers.
inline std::vector<double> sample_at(const ImageGrid& grid, double u, double v,
                                     int source_width, int source_height) {
  if (u < 0.0 || u >= double(source_width) || v < 0.0 ||
      v >= double(source_height))
    throw InvalidInputError("sample_at: coordinates outside image bounds");
  const double gu = u * double(grid.width) / double(source_width);
  const double gv = v * double(grid.height) / double(source_height);
  int x0 = int(gu);
  int y0 = int(gv);
  if (x0 > grid.width - 1) x0 = grid.width - 1;
  if (y0 > grid.height - 1) y0 = grid.height - 1;
  const int x1 = x0 + 1 < grid.width ? x0 + 1 : x0;
  const int y1 = y0 + 1 < grid.height ? y0 + 1 : y0;
  const double fx = gu - x0;
  const double fy = gv - y0;
  std::vector<double> out(grid.channels);
  for (int c = 0; c < grid.channels; ++c) {
    const double top =
        double(grid.at(y0, x0, c)) * (1.0 - fx) + double(grid.at(y0, x1, c)) * fx;
    const double bot =
        double(grid.at(y1, x0, c)) * (1.0 - fx) + double(grid.at(y1, x1, c)) * fx;
    out[c] = top * (1.0 - fy) + bot * fy;
  }
  return out;
}

inline std::vector<double> sample_at(const ImageGrid& grid, double u, double v) {
  return sample_at(grid, u, v, grid.width, grid.height);
}

// ---------------------------------------------------------------------------
// Trainable point encoder
// ---------------------------------------------------------------------------
//
// Per-point MLP over (x, y, z, intensity), then each point's feature is
// averaged with its nearest neighbors (at most K, within `radius`) for local
// context. tanh hidden activations, linear output. Inputs are scaled so tanh
// stays out of saturation at road scales.

struct PointEncoderConfig {
  std::vector<int> hidden_sizes = {32, 32};
  int feature_dim = 16;
  int pool_k = 8;
  double pool_radius = 1.0;
  double input_scale[4] = {0.05, 0.05, 0.2, 1.0};
};

struct DenseLayer {
  int in = 0, out = 0;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> bias;     // out
};

struct PointEncoderParams {
  PointEncoderConfig config;
  std::vector<DenseLayer> layers;

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }

  std::vector<double> flatten() const {
    std::vector<double> v;
    v.reserve(count());
    for (const auto& l : layers) {
      v.insert(v.end(), l.weights.begin(), l.weights.end());
      v.insert(v.end(), l.bias.begin(), l.bias.end());
    }
    return v;
  }

  void unflatten(std::span<const double> v) {
    std::size_t k = 0;
    for (auto& l : layers) {
      std::copy_n(v.begin() + k, l.weights.size(), l.weights.begin());
      k += l.weights.size();
      std::copy_n(v.begin() + k, l.bias.size(), l.bias.begin());
      k += l.bias.size();
    }
  }

  // Index of the first parameter belonging to the output (projection) layer
  // in the flattened order; the trainer applies the head multiplier there.
  std::size_t head_offset() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i)
      n += layers[i].weights.size() + layers[i].bias.size();
    return n;
  }
};

inline PointEncoderParams make_point_encoder(const PointEncoderConfig& config,
                                             std::uint64_t seed) {
  PointEncoderParams params;
  params.config = config;
  std::vector<int> dims;
  dims.push_back(4);
  for (int h : config.hidden_sizes) dims.push_back(h);
  dims.push_back(config.feature_dim);
  Rng rng(derive_seed(seed, 0x9E4C0DE4ull));
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer layer;
    layer.in = dims[i];
    layer.out = dims[i + 1];
    const double bound = 1.0 / std::sqrt(double(layer.in));
    layer.weights.resize(std::size_t(layer.out) * layer.in);
    for (double& w : layer.weights) w = rng.uniform(-bound, bound);
    layer.bias.assign(layer.out, 0.0);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

namespace detail {

// Uniform hash grid over 3D positions; cell size = query radius.
class NeighborGrid {
 public:
  NeighborGrid(std::span<const Vec3> points, double cell)
      : points_(points), cell_(cell) {
    buckets_.reserve(points.size() * 2);
    for (std::size_t i = 0; i < points.size(); ++i)
      buckets_.emplace(key_of(points[i]), std::vector<std::uint32_t>())
          .first->second.push_back(std::uint32_t(i));
  }

  // Indices (with squared distances) of all points within `radius` of q.
  void within(const Vec3& q, double radius,
              std::vector<std::pair<double, std::uint32_t>>& out) const {
    out.clear();
    const double r2 = radius * radius;
    const std::int64_t cx = coord(q.x), cy = coord(q.y), cz = coord(q.z);
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = buckets_.find(pack(cx + dx, cy + dy, cz + dz));
          if (it == buckets_.end()) continue;
          for (std::uint32_t j : it->second) {
            const Vec3 d = points_[j] - q;
            const double d2 = d.dot(d);
            if (d2 <= r2) out.emplace_back(d2, j);
          }
        }
  }

 private:
  std::int64_t coord(double v) const {
    return std::int64_t(std::floor(v / cell_));
  }
  std::uint64_t key_of(const Vec3& p) const {
    return pack(coord(p.x), coord(p.y), coord(p.z));
  }
  static std::uint64_t pack(std::int64_t x, std::int64_t y, std::int64_t z) {
    return (std::uint64_t(x) & 0x1fffffull) |
           ((std::uint64_t(y) & 0x1fffffull) << 21) |
           ((std::uint64_t(z) & 0x3fffffull) << 42);
  }

  std::span<const Vec3> points_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets_;
};

// Pooling neighborhoods: self plus at most K nearest within radius, ties
// broken by index.
inline std::vector<std::vector<std::uint32_t>> pooling_neighborhoods(
    std::span<const Vec3> points, int k, double radius) {
  std::vector<std::vector<std::uint32_t>> hoods(points.size());
  NeighborGrid grid(points, radius);
  std::vector<std::pair<double, std::uint32_t>> candidates;
  for (std::size_t i = 0; i < points.size(); ++i) {
    grid.within(points[i], radius, candidates);
    std::erase_if(candidates,
                  [&](const auto& c) { return c.second == std::uint32_t(i); });
    std::sort(candidates.begin(), candidates.end());
    if (candidates.size() > std::size_t(k)) candidates.resize(std::size_t(k));
    auto& hood = hoods[i];
    hood.push_back(std::uint32_t(i));
    for (const auto& [d2, j] : candidates) hood.push_back(j);
  }
  return hoods;
}

struct MlpTrace {
  // Per layer: pre-activation outputs for every point (N x out). The last
  // layer is linear, earlier layers pass through tanh.
  std::vector<std::vector<double>> activations;  // inputs of each layer
  std::vector<double> output;                    // N x feature_dim
};

inline void mlp_forward(const PointEncoderParams& params,
                        const PointCloud& cloud, MlpTrace& trace) {
  const std::size_t n = cloud.size();
  const auto& cfg = params.config;
  std::vector<double> current(n * 4);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p = cloud.point(i);
    current[4 * i + 0] = p.x * cfg.input_scale[0];
    current[4 * i + 1] = p.y * cfg.input_scale[1];
    current[4 * i + 2] = p.z * cfg.input_scale[2];
    current[4 * i + 3] = double(cloud.intensity[i]) * cfg.input_scale[3];
  }
  trace.activations.clear();
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const DenseLayer& layer = params.layers[li];
    trace.activations.push_back(current);
    const bool last = li + 1 == params.layers.size();
    std::vector<double> next(n * layer.out);
    for (std::size_t i = 0; i < n; ++i) {
      const double* in = current.data() + i * layer.in;
      double* out = next.data() + i * layer.out;
      for (int o = 0; o < layer.out; ++o) {
        const double* w = layer.weights.data() + std::size_t(o) * layer.in;
        double acc = layer.bias[o];
        for (int j = 0; j < layer.in; ++j) acc += w[j] * in[j];
        out[o] = last ? acc : std::tanh(acc);
      }
    }
    current = std::move(next);
  }
  trace.output = std::move(current);
}

}  // namespace detail

/// Forward pass: per-point MLP then neighborhood mean pooling. Output is one
/// C-dimensional row per point.
inline FeatureMatrix point_encode(const PointEncoderParams& params,
                                  const PointCloud& cloud) {
  const std::size_t n = cloud.size();
  const int c = params.config.feature_dim;
  detail::MlpTrace trace;
  detail::mlp_forward(params, cloud, trace);
  const auto pts = cloud.points();
  const auto hoods = detail::pooling_neighborhoods(
      std::span<const Vec3>(pts), params.config.pool_k,
      params.config.pool_radius);
  FeatureMatrix out(n, std::size_t(c));
  for (std::size_t i = 0; i < n; ++i) {
    const double inv = 1.0 / double(hoods[i].size());
    auto row = out.row(i);
    for (std::uint32_t j : hoods[i]) {
      const double* h = trace.output.data() + std::size_t(j) * c;
      for (int d = 0; d < c; ++d) row[d] += h[d];
    }
    for (int d = 0; d < c; ++d) row[d] *= inv;
  }
  return out;
}

/// Exact analytic gradients of point_encode with respect to every parameter,
/// given upstream gradients on the output rows. Returned in flattened
/// parameter order.
inline std::vector<double> point_encode_backward(
    const PointEncoderParams& params, const PointCloud& cloud,
    const FeatureMatrix& upstream) {
  const std::size_t n = cloud.size();
  const int c = params.config.feature_dim;
  if (upstream.rows() != n || upstream.cols() != std::size_t(c))
    throw InvalidInputError("point_encode_backward: upstream shape mismatch");

  detail::MlpTrace trace;
  detail::mlp_forward(params, cloud, trace);
  const auto pts = cloud.points();
  const auto hoods = detail::pooling_neighborhoods(
      std::span<const Vec3>(pts), params.config.pool_k,
      params.config.pool_radius);

  // Pooling backward: accumulate each output row's gradient into the MLP
  // outputs it averaged.
  std::vector<double> grad_mlp(n * std::size_t(c), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double inv = 1.0 / double(hoods[i].size());
    const auto up = upstream.row(i);
    for (std::uint32_t j : hoods[i]) {
      double* g = grad_mlp.data() + std::size_t(j) * c;
      for (int d = 0; d < c; ++d) g[d] += up[d] * inv;
    }
  }

  // MLP backward through the layers.
  std::vector<DenseLayer> grads;
  for (const auto& layer : params.layers) {
    DenseLayer g;
    g.in = layer.in;
    g.out = layer.out;
    g.weights.assign(layer.weights.size(), 0.0);
    g.bias.assign(layer.bias.size(), 0.0);
    grads.push_back(std::move(g));
  }

  std::vector<double> delta = std::move(grad_mlp);  // d loss / d layer output
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const DenseLayer& layer = params.layers[li];
    DenseLayer& grad = grads[li];
    const std::vector<double>& input = trace.activations[li];
    const bool last = li + 1 == params.layers.size();

    // tanh' uses this layer's outputs, which are cached as the next layer's
    // inputs. The last layer is linear.
    std::vector<double> next_delta(n * std::size_t(layer.in), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* in = input.data() + i * layer.in;
      double* dcur = delta.data() + i * layer.out;
      if (!last) {
        const double* t = trace.activations[li + 1].data() + i * layer.out;
        for (int o = 0; o < layer.out; ++o) dcur[o] *= (1.0 - t[o] * t[o]);
      }
      double* dnext = next_delta.data() + i * layer.in;
      for (int o = 0; o < layer.out; ++o) {
        const double d = dcur[o];
        if (d == 0.0) continue;
        double* gw = grad.weights.data() + std::size_t(o) * layer.in;
        const double* w = layer.weights.data() + std::size_t(o) * layer.in;
        grad.bias[o] += d;
        for (int j = 0; j < layer.in; ++j) {
          gw[j] += d * in[j];
          dnext[j] += d * w[j];
        }
      }
    }
    delta = std::move(next_delta);
  }

  PointEncoderParams grad_params;
  grad_params.config = params.config;
  grad_params.layers = std::move(grads);
  return grad_params.flatten();
}

}  // namespace lima
