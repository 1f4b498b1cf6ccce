#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lima/common.hpp"
#include "lima/geometry.hpp"

namespace lima {

// ---------------------------------------------------------------------------
// Point clouds
// ---------------------------------------------------------------------------

/// N points in the sensor/ego frame. Coordinates are stored as f32 (xyz
/// interleaved) to match the on-disk format bit for bit; intensity in [0,1];
/// label is the class id; provenance is the originating sequence id (used to
/// track mixing origin).
struct PointCloud {
  std::vector<float> coords;  // 3N
  std::vector<float> intensity;
  std::vector<std::uint16_t> label;
  std::vector<std::uint16_t> provenance;

  std::size_t size() const { return intensity.size(); }

  Vec3 point(std::size_t i) const {
    return {double(coords[3 * i]), double(coords[3 * i + 1]),
            double(coords[3 * i + 2])};
  }

  void set_point(std::size_t i, const Vec3& p) {
    coords[3 * i] = float(p.x);
    coords[3 * i + 1] = float(p.y);
    coords[3 * i + 2] = float(p.z);
  }

  void push_point(const Vec3& p, float inten, std::uint16_t lab,
                  std::uint16_t prov) {
    coords.push_back(float(p.x));
    coords.push_back(float(p.y));
    coords.push_back(float(p.z));
    intensity.push_back(inten);
    label.push_back(lab);
    provenance.push_back(prov);
  }

  // Copies point j of `src` verbatim (no float round trip).
  void append_from(const PointCloud& src, std::size_t j) {
    coords.push_back(src.coords[3 * j]);
    coords.push_back(src.coords[3 * j + 1]);
    coords.push_back(src.coords[3 * j + 2]);
    intensity.push_back(src.intensity[j]);
    label.push_back(src.label[j]);
    provenance.push_back(src.provenance[j]);
  }

  std::vector<Vec3> points() const {
    std::vector<Vec3> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = point(i);
    return out;
  }

  friend bool operator==(const PointCloud& a, const PointCloud& b) {
    return a.coords == b.coords && a.intensity == b.intensity &&
           a.label == b.label && a.provenance == b.provenance;
  }
};

inline std::vector<Correspondence> build_correspondences(
    const PointCloud& cloud, std::span<const CameraModel> cameras) {
  const auto pts = cloud.points();
  return build_correspondences(std::span<const Vec3>(pts), cameras);
}

// ---------------------------------------------------------------------------
// Raster images / feature grids
// ---------------------------------------------------------------------------

/// Dense H x W x C raster, row-major with channels innermost.
struct ImageGrid {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  ImageGrid() = default;
  ImageGrid(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c),
        data(std::size_t(h) * w * c, fill) {}

  float& at(int y, int x, int c) {
    return data[(std::size_t(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return data[(std::size_t(y) * width + x) * channels + c];
  }

  friend bool operator==(const ImageGrid& a, const ImageGrid& b) {
    return a.height == b.height && a.width == b.width &&
           a.channels == b.channels && a.data == b.data;
  }
};

/// Bilinear resampling with the half-pixel center convention (resizing to the
/// same size reproduces the input).
inline ImageGrid resize_image(const ImageGrid& img, int width, int height) {
  if (width < 1 || height < 1)
    throw InvalidInputError("resize_image: target size must be >= 1");
  ImageGrid out(height, width, img.channels);
  const double sx = double(img.width) / double(width);
  const double sy = double(img.height) / double(height);
  for (int y = 0; y < height; ++y) {
    double src_y = (y + 0.5) * sy - 0.5;
    if (src_y < 0.0) src_y = 0.0;
    int y0 = int(src_y);
    if (y0 > img.height - 1) y0 = img.height - 1;
    int y1 = y0 + 1 < img.height ? y0 + 1 : y0;
    const double fy = src_y - y0;
    for (int x = 0; x < width; ++x) {
      double src_x = (x + 0.5) * sx - 0.5;
      if (src_x < 0.0) src_x = 0.0;
      int x0 = int(src_x);
      if (x0 > img.width - 1) x0 = img.width - 1;
      int x1 = x0 + 1 < img.width ? x0 + 1 : x0;
      const double fx = src_x - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = img.at(y0, x0, c) * (1.0 - fx) + img.at(y0, x1, c) * fx;
        const double bot = img.at(y1, x0, c) * (1.0 - fx) + img.at(y1, x1, c) * fx;
        out.at(y, x, c) = float(top * (1.0 - fy) + bot * fy);
      }
    }
  }
  return out;
}

/// Mirrors the u (width) axis.
inline ImageGrid flip_image(const ImageGrid& img) {
  ImageGrid out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

// ---------------------------------------------------------------------------
// Frames and sequences
// ---------------------------------------------------------------------------

struct Frame {
  std::int64_t timestamp = 0;
  RigidPose ego_pose;  // world-from-ego
  PointCloud cloud;
  std::vector<CameraModel> cameras;
  std::vector<ImageGrid> images;
};

struct Sequence {
  std::uint32_t id = 0;
  std::uint32_t num_classes = 0;
  std::vector<Frame> frames;
};

}  // namespace lima
