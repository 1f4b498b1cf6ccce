#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lima/common.hpp"
#include "lima/pointcloud.hpp"

namespace lima {

// Sequence file format (little-endian):
//   magic "LIMASEQ1", u32 version=1, u32 sequence id, u32 T, u32 V,
//   u32 num_classes; per frame: i64 timestamp, 12xf64 pose (rotation
//   row-major, then translation), u32 N, N x (3xf32 coords, f32 intensity,
//   u16 label, u16 provenance); per camera: 9xf64 intrinsics, 12xf64
//   extrinsics, u32 H, u32 W, u32 C, H*W*C x f32 data.

inline constexpr char kSequenceMagic[8] = {'L', 'I', 'M', 'A',
                                           'S', 'E', 'Q', '1'};
inline constexpr std::uint32_t kSequenceVersion = 1;

namespace io_detail {

class Writer {
 public:
  explicit Writer(const std::string& path)
      : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw std::runtime_error("cannot open for write: " + path);
  }

  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), std::streamsize(n));
    if (!out_) throw std::runtime_error("write failure: " + path_);
  }

  template <typename T>
  void value(T v) {
    bytes(&v, sizeof(T));
  }

  template <typename T>
  void array(const std::vector<T>& v) {
    if (!v.empty()) bytes(v.data(), v.size() * sizeof(T));
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path)
      : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw std::runtime_error("cannot open for read: " + path);
    in_.seekg(0, std::ios::end);
    remaining_ = std::uint64_t(in_.tellg());
    in_.seekg(0, std::ios::beg);
  }

  void bytes(void* p, std::size_t n) {
    if (n > remaining_)
      throw TruncationError("truncated file: " + path_);
    in_.read(static_cast<char*>(p), std::streamsize(n));
    if (std::size_t(in_.gcount()) != n)
      throw TruncationError("truncated file: " + path_);
    remaining_ -= n;
  }

  template <typename T>
  T value() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }

  template <typename T>
  std::vector<T> array(std::size_t count) {
    require(count * sizeof(T));
    std::vector<T> v(count);
    bytes(v.data(), count * sizeof(T));
    return v;
  }

  // Checks the declared payload fits in what is left of the file before any
  // allocation happens.
  void require(std::uint64_t n) const {
    if (n > remaining_) throw TruncationError("truncated file: " + path_);
  }

 private:
  std::ifstream in_;
  std::string path_;
  std::uint64_t remaining_ = 0;
};

inline void write_pose(Writer& w, const RigidPose& pose) {
  for (double v : pose.rotation.m) w.value(v);
  w.value(pose.translation.x);
  w.value(pose.translation.y);
  w.value(pose.translation.z);
}

inline RigidPose read_pose(Reader& r) {
  RigidPose pose;
  for (double& v : pose.rotation.m) v = r.value<double>();
  pose.translation.x = r.value<double>();
  pose.translation.y = r.value<double>();
  pose.translation.z = r.value<double>();
  return pose;
}

}  // namespace io_detail

inline void save_sequence(const Sequence& seq, const std::string& path) {
  io_detail::Writer w(path);
  w.bytes(kSequenceMagic, 8);
  w.value(kSequenceVersion);
  w.value(seq.id);
  w.value(std::uint32_t(seq.frames.size()));
  const std::uint32_t num_cameras =
      seq.frames.empty() ? 0 : std::uint32_t(seq.frames[0].cameras.size());
  w.value(num_cameras);
  w.value(seq.num_classes);

  for (const Frame& frame : seq.frames) {
    w.value(frame.timestamp);
    io_detail::write_pose(w, frame.ego_pose);
    const std::uint32_t n = std::uint32_t(frame.cloud.size());
    w.value(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      w.value(frame.cloud.coords[3 * i]);
      w.value(frame.cloud.coords[3 * i + 1]);
      w.value(frame.cloud.coords[3 * i + 2]);
      w.value(frame.cloud.intensity[i]);
      w.value(frame.cloud.label[i]);
      w.value(frame.cloud.provenance[i]);
    }
    for (std::uint32_t v = 0; v < num_cameras; ++v) {
      const CameraModel& cam = frame.cameras[v];
      for (double m : cam.intrinsics.m) w.value(m);
      io_detail::write_pose(w, cam.extrinsics);
      const ImageGrid& img = frame.images[v];
      w.value(std::uint32_t(img.height));
      w.value(std::uint32_t(img.width));
      w.value(std::uint32_t(img.channels));
      w.array(img.data);
    }
  }
}

inline Sequence load_sequence(const std::string& path) {
  io_detail::Reader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kSequenceMagic, 8) != 0)
    throw MagicError("bad magic: " + path);
  const std::uint32_t version = r.value<std::uint32_t>();
  if (version != kSequenceVersion)
    throw VersionError("unsupported sequence version " +
                       std::to_string(version) + ": " + path);

  Sequence seq;
  seq.id = r.value<std::uint32_t>();
  const std::uint32_t num_frames = r.value<std::uint32_t>();
  const std::uint32_t num_cameras = r.value<std::uint32_t>();
  seq.num_classes = r.value<std::uint32_t>();

  for (std::uint32_t t = 0; t < num_frames; ++t) {
    Frame frame;
    frame.timestamp = r.value<std::int64_t>();
    frame.ego_pose = io_detail::read_pose(r);
    const std::uint32_t n = r.value<std::uint32_t>();
    r.require(std::uint64_t(n) * 20);  // 16 bytes floats + 4 bytes ids
    frame.cloud.coords.reserve(3 * n);
    frame.cloud.intensity.reserve(n);
    frame.cloud.label.reserve(n);
    frame.cloud.provenance.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      frame.cloud.coords.push_back(r.value<float>());
      frame.cloud.coords.push_back(r.value<float>());
      frame.cloud.coords.push_back(r.value<float>());
      frame.cloud.intensity.push_back(r.value<float>());
      frame.cloud.label.push_back(r.value<std::uint16_t>());
      frame.cloud.provenance.push_back(r.value<std::uint16_t>());
    }
    for (std::uint32_t v = 0; v < num_cameras; ++v) {
      CameraModel cam;
      for (double& m : cam.intrinsics.m) m = r.value<double>();
      cam.extrinsics = io_detail::read_pose(r);
      const std::uint32_t h = r.value<std::uint32_t>();
      const std::uint32_t w = r.value<std::uint32_t>();
      const std::uint32_t c = r.value<std::uint32_t>();
      cam.width = int(w);
      cam.height = int(h);
      ImageGrid img;
      img.height = int(h);
      img.width = int(w);
      img.channels = int(c);
      img.data = r.array<float>(std::size_t(h) * w * c);
      frame.cameras.push_back(cam);
      frame.images.push_back(std::move(img));
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

}  // namespace lima
