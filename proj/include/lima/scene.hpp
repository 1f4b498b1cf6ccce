#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "lima/common.hpp"
#include "lima/geometry.hpp"
#include "lima/pointcloud.hpp"

#include <json.hpp>

namespace lima {

// ---------------------------------------------------------------------------
// Synthetic driving sequences
// ---------------------------------------------------------------------------
//
// A sequence owns one fixed set of labeled world-frame points (ground plane,
// box obstacles, pole objects). Every frame re-expresses the in-range subset
// in the ego frame and renders camera images in which the pixels under each
// point's projection carry a class signature. A stationary ego therefore
// reproduces bit-identical frames, which the temporal-fusion fixed point
// relies on.

struct SceneConfig {
  int num_frames = 12;
  int num_cameras = 2;
  int num_points = 8000;   // world points sampled once per sequence
  int num_classes = 6;     // class 0 is ground
  int image_width = 128;
  int image_height = 64;
  int image_channels = 8;

  double speed = 2.0;          // meters per second
  double tick_seconds = 0.5;   // time between frames
  double yaw_rate = 0.03;      // radians per second
  double max_range = 45.0;     // per-frame range cull
  double ground_z = -1.6;      // ground plane height in the world frame
  double noise_amplitude = 0.25;      // image sensor noise
  double signature_amplitude = 2.0;   // class signature strength

  int num_boxes = 12;
  int num_poles = 10;

  double camera_yaw_gap = 0.5236;  // 30 deg between adjacent cameras
  double focal_px = 90.0;
};

inline nlohmann::json scene_config_to_json(const SceneConfig& c) {
  nlohmann::json j;
  j["num_frames"] = c.num_frames;
  j["num_cameras"] = c.num_cameras;
  j["num_points"] = c.num_points;
  j["num_classes"] = c.num_classes;
  j["image_width"] = c.image_width;
  j["image_height"] = c.image_height;
  j["image_channels"] = c.image_channels;
  j["speed"] = c.speed;
  j["tick_seconds"] = c.tick_seconds;
  j["yaw_rate"] = c.yaw_rate;
  j["max_range"] = c.max_range;
  j["ground_z"] = c.ground_z;
  j["noise_amplitude"] = c.noise_amplitude;
  j["signature_amplitude"] = c.signature_amplitude;
  j["num_boxes"] = c.num_boxes;
  j["num_poles"] = c.num_poles;
  j["camera_yaw_gap"] = c.camera_yaw_gap;
  j["focal_px"] = c.focal_px;
  return j;
}

/// Strict parse: unknown keys are configuration errors.
inline SceneConfig scene_config_from_json(const nlohmann::json& j) {
  SceneConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "num_frames") c.num_frames = value.get<int>();
      else if (key == "num_cameras") c.num_cameras = value.get<int>();
      else if (key == "num_points") c.num_points = value.get<int>();
      else if (key == "num_classes") c.num_classes = value.get<int>();
      else if (key == "image_width") c.image_width = value.get<int>();
      else if (key == "image_height") c.image_height = value.get<int>();
      else if (key == "image_channels") c.image_channels = value.get<int>();
      else if (key == "speed") c.speed = value.get<double>();
      else if (key == "tick_seconds") c.tick_seconds = value.get<double>();
      else if (key == "yaw_rate") c.yaw_rate = value.get<double>();
      else if (key == "max_range") c.max_range = value.get<double>();
      else if (key == "ground_z") c.ground_z = value.get<double>();
      else if (key == "noise_amplitude") c.noise_amplitude = value.get<double>();
      else if (key == "signature_amplitude") c.signature_amplitude = value.get<double>();
      else if (key == "num_boxes") c.num_boxes = value.get<int>();
      else if (key == "num_poles") c.num_poles = value.get<int>();
      else if (key == "camera_yaw_gap") c.camera_yaw_gap = value.get<double>();
      else if (key == "focal_px") c.focal_px = value.get<double>();
      else throw ConfigError("unknown SceneConfig key: " + key);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad value for SceneConfig key '" + key + "': " + e.what());
    }
  }
  return c;
}

/// Per-class channel signature painted into rendered images. Classes that fit
/// the channel count get orthogonal one-hot signatures; beyond that,
/// deterministic random unit vectors.
inline std::vector<float> class_signature(int class_id, int channels,
                                          double amplitude) {
  std::vector<float> sig(channels, 0.0f);
  if (class_id < channels) {
    sig[class_id] = float(amplitude);
    return sig;
  }
  Rng rng(derive_seed(0x51677EA11ull, std::uint64_t(class_id)));
  double norm2 = 0.0;
  std::vector<double> v(channels);
  for (int c = 0; c < channels; ++c) {
    v[c] = rng.normal();
    norm2 += v[c] * v[c];
  }
  const double inv = amplitude / std::sqrt(norm2);
  for (int c = 0; c < channels; ++c) sig[c] = float(v[c] * inv);
  return sig;
}

namespace detail {

struct WorldPoints {
  std::vector<Vec3> coords;  // world frame
  std::vector<float> intensity;
  std::vector<std::uint16_t> label;
};

// Object classes are grounded in geometry so they transfer across scenes: the
// non-ground classes split into box size bands and pole height bands, and an
// object's class decides the band its dimensions are drawn from. An encoder
// pretrained on some scenes can therefore recognize the same classes in an
// unseen one.
struct ObjectClasses {
  int box_classes = 1;   // classes 1 .. box_classes
  int pole_classes = 0;  // classes box_classes+1 .. box_classes+pole_classes

  static ObjectClasses split(int num_classes) {
    const int object_classes = num_classes - 1;
    ObjectClasses oc;
    oc.box_classes = std::max(1, (object_classes * 3 + 2) / 5);
    oc.pole_classes = object_classes - oc.box_classes;
    return oc;
  }
};

inline WorldPoints sample_world(std::uint64_t seed, const SceneConfig& cfg) {
  WorldPoints w;
  Rng rng(derive_seed(seed, 0xA01ull));
  const double track_len = cfg.speed * cfg.tick_seconds * cfg.num_frames;
  const double x_lo = -18.0, x_hi = 18.0 + track_len;
  const double y_lo = -18.0, y_hi = 18.0;

  const int n_ground = cfg.num_points * 2 / 5;
  const int n_box = cfg.num_points * 7 / 20;
  const int n_pole = cfg.num_points - n_ground - n_box;
  const ObjectClasses oc = ObjectClasses::split(cfg.num_classes);

  for (int i = 0; i < n_ground; ++i) {
    w.coords.push_back({rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi),
                        cfg.ground_z});
    w.intensity.push_back(float(rng.uniform()));
    w.label.push_back(0);
  }

  // Boxes: points on the four side faces and the top. Size band = class; the
  // first objects walk the bands round-robin so every class occurs in every
  // scene.
  for (int b = 0; b < cfg.num_boxes; ++b) {
    const int band = b < oc.box_classes
                         ? b
                         : int(rng.below(std::uint64_t(oc.box_classes)));
    const std::uint16_t cls = std::uint16_t(1 + band);
    const double lo = 0.5 + 1.0 * band, hi = 1.1 + 1.0 * band;
    const Vec3 center{rng.uniform(x_lo + 4.0, x_hi - 4.0),
                      rng.uniform(y_lo + 3.0, y_hi - 3.0), 0.0};
    const double sx = rng.uniform(lo, hi);
    const double sy = rng.uniform(lo, hi);
    const double sz = rng.uniform(0.8 * lo, 0.8 * hi);
    const int n = n_box / cfg.num_boxes + (b < n_box % cfg.num_boxes ? 1 : 0);
    for (int i = 0; i < n; ++i) {
      const int face = int(rng.below(5));
      double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
      Vec3 p;
      switch (face) {
        case 0: p = {sx, u * sy, (v + 1.0) * 0.5 * sz}; break;
        case 1: p = {-sx, u * sy, (v + 1.0) * 0.5 * sz}; break;
        case 2: p = {u * sx, sy, (v + 1.0) * 0.5 * sz}; break;
        case 3: p = {u * sx, -sy, (v + 1.0) * 0.5 * sz}; break;
        default: p = {u * sx, v * sy, sz}; break;
      }
      w.coords.push_back({center.x + p.x, center.y + p.y, cfg.ground_z + p.z});
      w.intensity.push_back(float(rng.uniform()));
      w.label.push_back(cls);
    }
  }

  // Poles: thin vertical cylinders. Height band = class; when the class
  // budget leaves no pole classes, poles share the last box class.
  for (int q = 0; q < cfg.num_poles; ++q) {
    int band = 0;
    std::uint16_t cls = std::uint16_t(oc.box_classes);
    if (oc.pole_classes > 0) {
      band = q < oc.pole_classes
                 ? q
                 : int(rng.below(std::uint64_t(oc.pole_classes)));
      cls = std::uint16_t(1 + oc.box_classes + band);
    }
    const double height = rng.uniform(2.0 + 2.5 * band, 3.2 + 2.8 * band);
    const double radius = rng.uniform(0.3, 0.5);
    const Vec3 base{rng.uniform(x_lo + 2.0, x_hi - 2.0),
                    rng.uniform(y_lo + 2.0, y_hi - 2.0), cfg.ground_z};
    const int n = n_pole / cfg.num_poles + (q < n_pole % cfg.num_poles ? 1 : 0);
    for (int i = 0; i < n; ++i) {
      const double a = rng.uniform(-3.14159265358979, 3.14159265358979);
      const double h = rng.uniform(0.0, height);
      w.coords.push_back({base.x + radius * std::cos(a),
                          base.y + radius * std::sin(a), base.z + h});
      w.intensity.push_back(float(rng.uniform()));
      w.label.push_back(cls);
    }
  }
  return w;
}

// Camera rig in the ego frame (x forward, y left, z up). Camera frames use
// x right, y down, z forward.
inline std::vector<CameraModel> build_rig(const SceneConfig& cfg) {
  std::vector<CameraModel> rig;
  for (int v = 0; v < cfg.num_cameras; ++v) {
    const double yaw = (v - 0.5 * (cfg.num_cameras - 1)) * cfg.camera_yaw_gap;
    const double cy = std::cos(yaw), sy = std::sin(yaw);
    const Vec3 fwd{cy, sy, 0.0};
    const Vec3 right{sy, -cy, 0.0};
    const Vec3 down{0.0, 0.0, -1.0};
    Mat3 rot;
    rot.at(0, 0) = right.x; rot.at(0, 1) = right.y; rot.at(0, 2) = right.z;
    rot.at(1, 0) = down.x;  rot.at(1, 1) = down.y;  rot.at(1, 2) = down.z;
    rot.at(2, 0) = fwd.x;   rot.at(2, 1) = fwd.y;   rot.at(2, 2) = fwd.z;
    const Vec3 center{0.4, 0.0, 0.2};  // mount offset
    CameraModel cam;
    cam.extrinsics = RigidPose{rot, rot * (center * -1.0)};
    cam.intrinsics = Mat3::identity();
    cam.intrinsics.at(0, 0) = cfg.focal_px;
    cam.intrinsics.at(1, 1) = cfg.focal_px;
    cam.intrinsics.at(0, 2) = cfg.image_width * 0.5;
    cam.intrinsics.at(1, 2) = cfg.image_height * 0.5;
    cam.width = cfg.image_width;
    cam.height = cfg.image_height;
    rig.push_back(cam);
  }
  return rig;
}

}  // namespace detail

/// Deterministic synthetic driving sequence: labeled world geometry, a smooth
/// ego trajectory, and per-camera images whose pixels encode point classes.
inline Sequence generate_sequence(std::uint64_t seed, const SceneConfig& cfg,
                                  std::uint32_t sequence_id = 0) {
  if (cfg.num_frames < 1 || cfg.num_cameras < 1 || cfg.num_classes < 2 ||
      cfg.num_points < 1 || cfg.image_width < 4 || cfg.image_height < 4 ||
      cfg.image_channels < 1)
    throw ConfigError("generate_sequence: degenerate scene config");

  const detail::WorldPoints world = detail::sample_world(seed, cfg);
  const std::vector<CameraModel> rig = detail::build_rig(cfg);

  // Background noise per camera, frozen across frames.
  std::vector<ImageGrid> backgrounds;
  for (int v = 0; v < cfg.num_cameras; ++v) {
    ImageGrid img(cfg.image_height, cfg.image_width, cfg.image_channels);
    Rng noise(derive_seed(seed, 0xB06ull, std::uint64_t(v)));
    for (auto& px : img.data)
      px = float(cfg.noise_amplitude * (2.0 * noise.uniform() - 1.0));
    backgrounds.push_back(std::move(img));
  }

  std::vector<std::vector<float>> signatures;
  for (int c = 0; c < cfg.num_classes; ++c)
    signatures.push_back(
        class_signature(c, cfg.image_channels, cfg.signature_amplitude));

  Sequence seq;
  seq.id = sequence_id;
  seq.num_classes = std::uint32_t(cfg.num_classes);

  Vec3 position{0.0, 0.0, 0.0};
  double heading = 0.0;
  const double step_len = cfg.speed * cfg.tick_seconds;

  for (int t = 0; t < cfg.num_frames; ++t) {
    Frame frame;
    frame.timestamp = t;
    frame.ego_pose = RigidPose{Mat3::rotation_z(heading), position};
    frame.cameras = rig;

    const RigidPose ego_from_world = inverse(frame.ego_pose);
    for (std::size_t i = 0; i < world.coords.size(); ++i) {
      const Vec3 rel = world.coords[i] - position;
      if (rel.norm() > cfg.max_range) continue;
      frame.cloud.push_point(apply(ego_from_world, world.coords[i]),
                             world.intensity[i], world.label[i],
                             std::uint16_t(sequence_id));
    }

    // Render: splat class signatures at projected pixels, far points first.
    const auto pts = frame.cloud.points();
    for (int v = 0; v < cfg.num_cameras; ++v) {
      ImageGrid img = backgrounds[v];
      const auto projs = project_points(std::span<const Vec3>(pts), rig[v]);
      std::vector<std::uint32_t> order;
      for (std::uint32_t i = 0; i < projs.size(); ++i)
        if (projs[i]) order.push_back(i);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::uint32_t a, std::uint32_t b) {
                         return projs[a]->depth > projs[b]->depth;
                       });
      for (std::uint32_t i : order) {
        const auto& pr = *projs[i];
        const auto& sig = signatures[frame.cloud.label[i]];
        const int xc = int(pr.u + 0.5), yc = int(pr.v + 0.5);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int x = xc + dx, y = yc + dy;
            if (x < 0 || y < 0 || x >= img.width || y >= img.height) continue;
            // noise stays additive under the splat, so every observation of
            // a point carries sensor noise
            for (int c = 0; c < img.channels; ++c)
              img.at(y, x, c) = sig[c] + backgrounds[v].at(y, x, c);
          }
      }
      frame.images.push_back(std::move(img));
    }

    seq.frames.push_back(std::move(frame));

    const Vec3 dir{std::cos(heading), std::sin(heading), 0.0};
    position = position + dir * step_len;
    heading += cfg.yaw_rate * cfg.tick_seconds;
  }
  return seq;
}

}  // namespace lima
