#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include "lima/augment.hpp"
#include "lima/scene.hpp"
#include "lima/sequence_io.hpp"
#include "test_util.hpp"

using namespace lima;

namespace {

bool sequences_equal(const Sequence& a, const Sequence& b) {
  if (a.id != b.id || a.num_classes != b.num_classes ||
      a.frames.size() != b.frames.size())
    return false;
  for (std::size_t t = 0; t < a.frames.size(); ++t) {
    const Frame& fa = a.frames[t];
    const Frame& fb = b.frames[t];
    if (fa.timestamp != fb.timestamp) return false;
    if (!(fa.ego_pose == fb.ego_pose)) return false;
    if (!(fa.cloud == fb.cloud)) return false;
    if (fa.images.size() != fb.images.size()) return false;
    for (std::size_t v = 0; v < fa.images.size(); ++v) {
      if (!(fa.images[v] == fb.images[v])) return false;
      if (!(fa.cameras[v].intrinsics == fb.cameras[v].intrinsics)) return false;
      if (!(fa.cameras[v].extrinsics == fb.cameras[v].extrinsics)) return false;
    }
  }
  return true;
}

SceneConfig small_config() {
  SceneConfig cfg;
  cfg.num_frames = 4;
  cfg.num_points = 1200;
  return cfg;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("generate_sequence is deterministic in (seed, config)") {
  const SceneConfig cfg = small_config();
  const Sequence a = generate_sequence(42, cfg);
  const Sequence b = generate_sequence(42, cfg);
  CHECK(sequences_equal(a, b));
  const Sequence c = generate_sequence(43, cfg);
  CHECK_FALSE(sequences_equal(a, c));
}

TEST_CASE("generate_sequence rejects degenerate configs") {
  SceneConfig cfg = small_config();
  cfg.num_frames = 0;
  CHECK_THROWS_AS(generate_sequence(1, cfg), ConfigError);
  cfg = small_config();
  cfg.num_cameras = 0;
  CHECK_THROWS_AS(generate_sequence(1, cfg), ConfigError);
  cfg = small_config();
  cfg.num_classes = 1;
  CHECK_THROWS_AS(generate_sequence(1, cfg), ConfigError);
}

TEST_CASE("overlapping cameras see shared points in frame 0") {
  const Sequence seq = generate_sequence(5, small_config());
  const Frame& frame = seq.frames[0];
  const auto corr = build_correspondences(frame.cloud, frame.cameras);
  std::map<std::uint32_t, int> views;
  for (const Correspondence& c : corr) views[c.point_index] += 1;
  int overlap = 0;
  for (const auto& [idx, n] : views)
    if (n >= 2) ++overlap;
  CHECK(overlap >= 1);
}

TEST_CASE("ego displacement per frame equals speed * tick") {
  SceneConfig cfg = small_config();
  cfg.speed = 3.0;
  cfg.tick_seconds = 0.25;
  cfg.yaw_rate = 0.1;
  const Sequence seq = generate_sequence(9, cfg);
  for (std::size_t t = 0; t + 1 < seq.frames.size(); ++t) {
    const Vec3 d = seq.frames[t + 1].ego_pose.translation -
                   seq.frames[t].ego_pose.translation;
    CHECK(std::abs(d.norm() - 3.0 * 0.25) < 1e-9);
  }
  // timestamps strictly increase
  for (std::size_t t = 0; t + 1 < seq.frames.size(); ++t)
    CHECK(seq.frames[t + 1].timestamp > seq.frames[t].timestamp);
}

TEST_CASE("stationary config reproduces bit-identical frames") {
  SceneConfig cfg = small_config();
  cfg.speed = 0.0;
  cfg.yaw_rate = 0.0;
  const Sequence seq = generate_sequence(21, cfg);
  for (std::size_t t = 1; t < seq.frames.size(); ++t) {
    CHECK(seq.frames[t].cloud == seq.frames[0].cloud);
    for (std::size_t v = 0; v < seq.frames[t].images.size(); ++v)
      CHECK(seq.frames[t].images[v] == seq.frames[0].images[v]);
  }
}

// ---------------------------------------------------------------------------
// augment_cloud
// ---------------------------------------------------------------------------

TEST_CASE("augment with identity policy returns the input") {
  Rng rng(1);
  const PointCloud cloud = lima_test::random_cloud(rng, 100);
  Rng arng(2);
  const AugmentResult res = augment_cloud(cloud, arng, AugmentPolicy::identity());
  CHECK(res.cloud == cloud);
}

TEST_CASE("pure 180 degree z-rotation flips x and y") {
  PointCloud cloud;
  cloud.push_point({1, 1, 0}, 0.5f, 1, 0);
  AugmentPolicy policy = AugmentPolicy::identity();
  policy.rotation_min = policy.rotation_max = 3.14159265358979312;
  Rng rng(3);
  const AugmentResult res = augment_cloud(cloud, rng, policy);
  const Vec3 p = res.cloud.point(0);
  CHECK(std::abs(p.x + 1.0) < 1e-6);
  CHECK(std::abs(p.y + 1.0) < 1e-6);
  CHECK(std::abs(p.z) < 1e-9);
}

TEST_CASE("scaling multiplies pairwise distances") {
  Rng rng(4);
  const PointCloud cloud = lima_test::random_cloud(rng, 40);
  AugmentPolicy policy = AugmentPolicy::identity();
  policy.scale_min = policy.scale_max = 1.05;
  Rng arng(5);
  const AugmentResult res = augment_cloud(cloud, arng, policy);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = i + 1; j < 10; ++j) {
      const double before = (cloud.point(i) - cloud.point(j)).norm();
      const double after = (res.cloud.point(i) - res.cloud.point(j)).norm();
      CHECK(std::abs(after - 1.05 * before) < 1e-5);
    }
}

TEST_CASE("augmentation keeps labels, intensity and provenance aligned") {
  Rng rng(6);
  const PointCloud cloud = lima_test::random_cloud(rng, 200);
  Rng arng(7);
  const AugmentResult res = augment_cloud(cloud, arng, AugmentPolicy{});
  CHECK(res.cloud.label == cloud.label);
  CHECK(res.cloud.provenance == cloud.provenance);
  CHECK(res.cloud.intensity == cloud.intensity);
  // the returned transform reproduces the output coordinates
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 expect = res.transform.apply(cloud.point(i));
    CHECK((res.cloud.point(i) - expect).norm() < 1e-6);
  }
}

// ---------------------------------------------------------------------------
// voxel_downsample_cylindrical
// ---------------------------------------------------------------------------

TEST_CASE("voxel downsample collapses duplicates and keeps sparse points") {
  PointCloud dup;
  dup.push_point({3, 4, 1}, 0.2f, 1, 0);
  dup.push_point({3, 4, 1}, 0.4f, 1, 0);
  const PointCloud out = voxel_downsample_cylindrical(dup, 0.1);
  REQUIRE(out.size() == 1);
  CHECK(out.intensity[0] == Catch::Approx(0.3f));

  // points far apart in every cell axis survive individually
  PointCloud sparse;
  sparse.push_point({1, 0, 0}, 0.1f, 0, 0);
  sparse.push_point({5, 0, 0}, 0.1f, 0, 0);
  sparse.push_point({5, 0, 3}, 0.1f, 0, 0);
  CHECK(voxel_downsample_cylindrical(sparse, 0.1).size() == 3);
}

TEST_CASE("voxel downsample count matches an independent binning oracle") {
  Rng rng(8);
  PointCloud cloud;
  for (int i = 0; i < 10000; ++i)
    cloud.push_point({rng.uniform(-30, 30), rng.uniform(-30, 30),
                      rng.uniform(-2, 4)},
                     float(rng.uniform()), std::uint16_t(rng.below(6)), 0);

  const double res = 0.1;
  const double dtheta = res / 10.0;  // arc-length matched at 10 m
  std::set<std::tuple<long, long, long>> cells;
  const long n_tb = long(std::ceil(2.0 * 3.14159265358979312 / dtheta));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 p = cloud.point(i);
    const double r = std::hypot(p.x, p.y);
    long tb = long(std::floor((std::atan2(p.y, p.x) + 3.14159265358979312) / dtheta));
    if (tb >= n_tb) tb = n_tb - 1;
    if (tb < 0) tb = 0;
    cells.insert({long(std::floor(r / res)), tb, long(std::floor(p.z / res))});
  }

  const PointCloud out = voxel_downsample_cylindrical(cloud, res);
  CHECK(out.size() == cells.size());
  CHECK(out.size() <= cloud.size());
}

TEST_CASE("voxel downsample is idempotent") {
  Rng rng(9);
  PointCloud cloud;
  for (int i = 0; i < 3000; ++i)
    cloud.push_point({rng.uniform(-20, 20), rng.uniform(-20, 20),
                      rng.uniform(-2, 2)},
                     float(rng.uniform()), std::uint16_t(rng.below(6)), 0);
  const PointCloud once = voxel_downsample_cylindrical(cloud, 0.2);
  const PointCloud twice = voxel_downsample_cylindrical(once, 0.2);
  CHECK(once.size() == twice.size());
  for (std::size_t i = 0; i < once.size(); ++i)
    CHECK((once.point(i) - twice.point(i)).norm() < 1e-12);
}

TEST_CASE("voxel downsample edge cases") {
  CHECK(voxel_downsample_cylindrical(PointCloud{}, 0.1).size() == 0);
  PointCloud one;
  one.push_point({1, 2, 3}, 0.5f, 2, 1);
  CHECK_THROWS_AS(voxel_downsample_cylindrical(one, 0.0), InvalidInputError);
  const PointCloud out = voxel_downsample_cylindrical(one, 0.1);
  REQUIRE(out.size() == 1);
  CHECK(out.label[0] == 2);
  CHECK(out.provenance[0] == 1);
}

// ---------------------------------------------------------------------------
// images
// ---------------------------------------------------------------------------

TEST_CASE("resize to the same size is the identity") {
  Rng rng(10);
  ImageGrid img(16, 24, 3);
  for (float& v : img.data) v = float(rng.uniform(-1, 1));
  const ImageGrid out = resize_image(img, 24, 16);
  REQUIRE(out.data.size() == img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(std::abs(out.data[i] - img.data[i]) < 1e-9);
}

TEST_CASE("flip twice is the identity; constant images resize to themselves") {
  Rng rng(11);
  ImageGrid img(8, 10, 2);
  for (float& v : img.data) v = float(rng.uniform(-1, 1));
  CHECK(flip_image(flip_image(img)) == img);

  ImageGrid constant(6, 9, 2, 0.75f);
  const ImageGrid resized = resize_image(constant, 17, 4);
  for (float v : resized.data) CHECK(v == Catch::Approx(0.75f).margin(1e-9));
}

TEST_CASE("resize rejects degenerate targets") {
  ImageGrid img(4, 4, 1, 0.0f);
  CHECK_THROWS_AS(resize_image(img, 0, 4), InvalidInputError);
}

// ---------------------------------------------------------------------------
// persistence
// ---------------------------------------------------------------------------

TEST_CASE("sequence save/load round trip is bit-identical") {
  const Sequence seq = generate_sequence(77, small_config(), 3);
  const std::string path = temp_path("lima_seq_roundtrip.limaseq");
  save_sequence(seq, path);
  const Sequence loaded = load_sequence(path);
  CHECK(sequences_equal(seq, loaded));

  // byte-level: saving the loaded sequence reproduces the file
  const std::string path2 = temp_path("lima_seq_roundtrip2.limaseq");
  save_sequence(loaded, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)),
                       std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)),
                       std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("sequence loader distinguishes magic, version and truncation errors") {
  const Sequence seq = generate_sequence(1, small_config());
  const std::string path = temp_path("lima_seq_errors.limaseq");
  save_sequence(seq, path);

  // wrong magic
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("NOTMAGIC", 8);
  }
  CHECK_THROWS_AS(load_sequence(path), MagicError);

  // bad version
  save_sequence(seq, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const std::uint32_t v = 99;
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  CHECK_THROWS_AS(load_sequence(path), VersionError);

  // truncated payload
  save_sequence(seq, path);
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() / 2);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), std::streamsize(bytes.size()));
  }
  CHECK_THROWS_AS(load_sequence(path), TruncationError);
  std::remove(path.c_str());
}
