#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lima/aggregation.hpp"
#include "lima/common.hpp"
#include "lima/encoders.hpp"
#include "lima/geometry.hpp"
#include "lima/losses.hpp"
#include "lima/memory.hpp"
#include "lima/metrics.hpp"
#include "lima/mixing.hpp"
#include "lima/optim.hpp"
#include "lima/pointcloud.hpp"
#include "lima/sequence_io.hpp"

#include <json.hpp>

namespace lima {

// ---------------------------------------------------------------------------
// Training configuration
// ---------------------------------------------------------------------------

enum class LossKind { kL2, kCosine, kInfonceSampled, kKl };

inline std::string to_string(AggregationMode m) {
  return m == AggregationMode::kMean ? "mean" : "max";
}

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::kL2: return "l2";
    case LossKind::kCosine: return "cosine";
    case LossKind::kInfonceSampled: return "infonce_sampled";
    case LossKind::kKl: return "kl";
  }
  return "l2";
}

struct TrainConfig {
  int epochs = 50;
  double base_lr = 0.01;
  int memory_frames = 6;
  double tau = 0.07;
  double mix_probability = 0.5;
  AggregationMode aggregation_mode = AggregationMode::kMean;
  LossKind loss_kind = LossKind::kL2;
  double head_lr_multiplier = 10.0;
  std::uint64_t seed = 0;

  // Optimizer and schedule constants the paper leaves unstated.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  double warmup_fraction = 0.3;

  // Module defaults surfaced for ablation.
  double fusion_radius = 0.25;
  int contrastive_pairs = 4096;
  int mix_bands = 6;
  double mix_azimuth_extent = 3.14159265358979312;

  AdamWHyper adamw(double lr) const {
    return AdamWHyper{lr, beta1, beta2, epsilon, weight_decay};
  }
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["epochs"] = c.epochs;
  j["base_lr"] = c.base_lr;
  j["memory_frames"] = c.memory_frames;
  j["tau"] = c.tau;
  j["mix_probability"] = c.mix_probability;
  j["aggregation_mode"] = to_string(c.aggregation_mode);
  j["loss_kind"] = to_string(c.loss_kind);
  j["head_lr_multiplier"] = c.head_lr_multiplier;
  j["seed"] = c.seed;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["weight_decay"] = c.weight_decay;
  j["warmup_fraction"] = c.warmup_fraction;
  j["fusion_radius"] = c.fusion_radius;
  j["contrastive_pairs"] = c.contrastive_pairs;
  j["mix_bands"] = c.mix_bands;
  j["mix_azimuth_extent"] = c.mix_azimuth_extent;
  return j;
}

/// Strict parse: unknown keys are configuration errors; absent keys keep
/// their defaults.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "base_lr") c.base_lr = value.get<double>();
      else if (key == "memory_frames") c.memory_frames = value.get<int>();
      else if (key == "tau") c.tau = value.get<double>();
      else if (key == "mix_probability") c.mix_probability = value.get<double>();
      else if (key == "aggregation_mode") {
        const std::string s = value.get<std::string>();
        if (s == "mean") c.aggregation_mode = AggregationMode::kMean;
        else if (s == "max") c.aggregation_mode = AggregationMode::kMax;
        else throw ConfigError("unknown aggregation_mode: " + s);
      } else if (key == "loss_kind") {
        const std::string s = value.get<std::string>();
        if (s == "l2") c.loss_kind = LossKind::kL2;
        else if (s == "cosine") c.loss_kind = LossKind::kCosine;
        else if (s == "infonce_sampled") c.loss_kind = LossKind::kInfonceSampled;
        else if (s == "kl") c.loss_kind = LossKind::kKl;
        else throw ConfigError("unknown loss_kind: " + s);
      } else if (key == "head_lr_multiplier") c.head_lr_multiplier = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "epsilon") c.epsilon = value.get<double>();
      else if (key == "weight_decay") c.weight_decay = value.get<double>();
      else if (key == "warmup_fraction") c.warmup_fraction = value.get<double>();
      else if (key == "fusion_radius") c.fusion_radius = value.get<double>();
      else if (key == "contrastive_pairs") c.contrastive_pairs = value.get<int>();
      else if (key == "mix_bands") c.mix_bands = value.get<int>();
      else if (key == "mix_azimuth_extent") c.mix_azimuth_extent = value.get<double>();
      else throw ConfigError("unknown TrainConfig key: " + key);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad value for TrainConfig key '" + key + "': " + e.what());
    }
  }
  if (c.epochs < 1 || c.base_lr <= 0.0 || c.memory_frames < 0 || c.tau <= 0.0 ||
      c.mix_probability < 0.0 || c.mix_probability > 1.0 ||
      c.head_lr_multiplier <= 0.0 || c.fusion_radius <= 0.0 ||
      c.contrastive_pairs < 1)
    throw ConfigError("TrainConfig values out of range");
  return c;
}

// ---------------------------------------------------------------------------
// Per-frame teacher features
// ---------------------------------------------------------------------------

/// Cross-view aggregated teacher features for one frame: unified features
/// over camera-visible points, their indices, and the visibility mask.
struct FrameTeacher {
  CrossViewResult unified;          // F_u over visible points
  std::vector<Vec3> visible_points; // ego frame, aligned with unified rows
};

struct TraceRow {
  std::uint64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

class Trainer {
 public:
  Trainer(TrainConfig config, std::vector<Sequence> sequences,
          PointEncoderConfig encoder_config = {})
      : config_(std::move(config)),
        sequences_(std::move(sequences)),
        encoder_config_(encoder_config),
        image_encoder_(image_channels_of(sequences_), encoder_config.feature_dim),
        params_(make_point_encoder(encoder_config_, config_.seed)),
        opt_(params_.count()) {
    if (sequences_.empty())
      throw InvalidInputError("Trainer: no training sequences");
    num_frames_ = sequences_[0].frames.size();
    for (const Sequence& s : sequences_)
      if (s.frames.size() != num_frames_)
        throw InvalidInputError("Trainer: sequences must share frame count");
    for (const Sequence& s : sequences_)
      banks_.emplace_back(std::size_t(config_.memory_frames));
  }

  const TrainConfig& config() const { return config_; }
  const PointEncoderParams& params() const { return params_; }
  PointEncoderParams& params() { return params_; }
  const AdamWState& optimizer_state() const { return opt_; }
  const std::vector<MemoryBank>& banks() const { return banks_; }
  const std::vector<TraceRow>& trace() const { return trace_; }
  const std::vector<Sequence>& sequences() const { return sequences_; }
  const ImageEncoder& image_encoder() const { return image_encoder_; }

  std::uint64_t step() const { return step_; }
  std::uint64_t total_steps() const {
    return std::uint64_t(config_.epochs) * num_frames_ * sequences_.size();
  }
  bool done() const { return step_ >= total_steps(); }

  /// Teacher path for one frame: frozen image features, correspondences,
  /// bilinear samples, cross-view aggregation. No gradients flow here.
  FrameTeacher compute_teacher(const Frame& frame) const {
    std::vector<ImageGrid> grids;
    grids.reserve(frame.images.size());
    for (const ImageGrid& img : frame.images)
      grids.push_back(image_encoder_.encode(img));
    return assemble_teacher(frame, grids);
  }

  /// One pretraining update on a frame: aggregate teacher views, fuse with
  /// warped memory, distill into the point encoder, push the new unified
  /// features into the bank. Returns the step's loss.
  double pretrain_step(const Frame& frame, MemoryBank& bank) {
    const FrameTeacher teacher = compute_teacher(frame);
    return pretrain_step_with_teacher(frame, bank, teacher);
  }

  /// Mixed-scene update: blends the camera-visible subclouds of two frames,
  /// trains the encoder against each point's own-sequence fused target with
  /// the l2 objective. Banks are read, never updated.
  double pretrain_mixed_step(const Frame& frame_a, const Frame& frame_b,
                             const MemoryBank& bank_a, const MemoryBank& bank_b,
                             Rng& rng) {
    const auto [cloud_a, fused_a] = fused_visible(frame_a, bank_a);
    const auto [cloud_b, fused_b] = fused_visible(frame_b, bank_b);

    MixedCloud mixed;
    if (rng.bernoulli(0.5)) {
      mixed = lasermix(cloud_a, cloud_b, config_.mix_bands, rng);
    } else {
      const double start = rng.uniform(-3.14159265358979312, 3.14159265358979312);
      mixed = polarmix_swap(cloud_a, cloud_b, start, config_.mix_azimuth_extent);
    }
    const MixedScene scene = build_mixed_targets(mixed, fused_a, fused_b);
    mixed_steps_ += 1;
    if (scene.cloud.size() == 0) return 0.0;

    const FeatureMatrix student = point_encode(params_, scene.cloud);
    const LossOutput loss = l2_distill(scene.source_targets, student);
    apply_update(scene.cloud, loss.grad_student, current_lr());
    return loss.value;
  }

  std::uint64_t mixed_steps_run() const { return mixed_steps_; }

  /// Advances one schedule slot (one regular step, preceded by the mixed
  /// phase when the slot opens a new timestamp). Returns false when training
  /// is complete.
  bool advance() {
    if (done()) return false;
    const std::uint64_t g = step_;
    const std::size_t seqs = sequences_.size();
    const std::size_t slot = std::size_t(g % (num_frames_ * seqs));
    const std::size_t epoch = std::size_t(g / (num_frames_ * seqs));
    const std::size_t t = slot / seqs;
    const std::size_t s = slot % seqs;

    if (t == 0 && s == 0)
      for (MemoryBank& bank : banks_) bank.clear();  // one traversal per epoch

    if (s == 0 && seqs >= 2 && config_.mix_probability > 0.0) {
      for (std::size_t ms = 0; ms < seqs; ++ms) {
        Rng coin(derive_seed(config_.seed, 0x311Full ^ epoch, t, ms));
        if (!coin.bernoulli(config_.mix_probability)) continue;
        std::size_t partner = std::size_t(coin.below(seqs - 1));
        if (partner >= ms) ++partner;
        pretrain_mixed_step(sequences_[ms].frames[t], sequences_[partner].frames[t],
                            banks_[ms], banks_[partner], coin);
      }
    }

    const double lr = current_lr();
    const double loss = pretrain_step(sequences_[s].frames[t], banks_[s]);
    trace_.push_back(TraceRow{step_, lr, loss});
    ++step_;
    return !done();
  }

  void run() {
    while (advance()) {
    }
  }

  double current_lr() const {
    return onecycle_lr(step_, total_steps(), config_.base_lr,
                       config_.warmup_fraction);
  }

  // ---- checkpointing ----

  void save_checkpoint(const std::string& path) const;
  static Trainer load_checkpoint(const std::string& path,
                                 std::vector<Sequence> sequences,
                                 PointEncoderConfig encoder_config = {});

 private:
  static int image_channels_of(const std::vector<Sequence>& seqs) {
    for (const Sequence& s : seqs)
      for (const Frame& f : s.frames)
        if (!f.images.empty()) return f.images[0].channels;
    return 1;
  }

  FrameTeacher assemble_teacher(const Frame& frame,
                                const std::vector<ImageGrid>& grids) const {
    const auto pts = frame.cloud.points();
    std::map<std::uint32_t, ViewSamples> by_point;
    for (std::size_t v = 0; v < frame.cameras.size(); ++v) {
      const auto projs =
          project_points(std::span<const Vec3>(pts), frame.cameras[v]);
      for (std::size_t i = 0; i < projs.size(); ++i) {
        if (!projs[i]) continue;
        auto& vs = by_point[std::uint32_t(i)];
        vs.point_index = std::uint32_t(i);
        vs.samples.push_back(sample_at(grids[v], projs[i]->u, projs[i]->v,
                                       frame.cameras[v].width,
                                       frame.cameras[v].height));
      }
    }
    std::vector<ViewSamples> samples;
    samples.reserve(by_point.size());
    for (auto& [idx, vs] : by_point) samples.push_back(std::move(vs));

    FrameTeacher teacher;
    teacher.unified = cross_view_aggregate(samples, config_.aggregation_mode,
                                           frame.cloud.size());
    teacher.visible_points.reserve(teacher.unified.point_indices.size());
    for (std::uint32_t idx : teacher.unified.point_indices)
      teacher.visible_points.push_back(pts[idx]);
    return teacher;
  }

  // Visible subcloud of a frame plus its memory-fused teacher features.
  std::pair<PointCloud, FeatureMatrix> fused_visible(const Frame& frame,
                                                     const MemoryBank& bank) {
    const FrameTeacher teacher = compute_teacher(frame);
    const auto warped = warp_entries(bank, frame.ego_pose);
    FeatureMatrix fused =
        fuse_long_term(teacher.visible_points, teacher.unified.features, warped,
                       config_.fusion_radius);
    PointCloud sub;
    for (std::uint32_t idx : teacher.unified.point_indices)
      sub.append_from(frame.cloud, idx);
    return {std::move(sub), std::move(fused)};
  }

  double pretrain_step_with_teacher(const Frame& frame, MemoryBank& bank,
                                    const FrameTeacher& teacher) {
    double loss_value = 0.0;
    if (!teacher.unified.point_indices.empty()) {
      const auto warped = warp_entries(bank, frame.ego_pose);
      const FeatureMatrix fused =
          fuse_long_term(teacher.visible_points, teacher.unified.features,
                         warped, config_.fusion_radius);

      PointCloud sub;
      for (std::uint32_t idx : teacher.unified.point_indices)
        sub.append_from(frame.cloud, idx);
      const FeatureMatrix student = point_encode(params_, sub);

      LossOutput loss;
      switch (config_.loss_kind) {
        case LossKind::kL2:
          loss = l2_distill(fused, student);
          break;
        case LossKind::kCosine:
          loss = cosine_distill(fused, student);
          break;
        case LossKind::kInfonceSampled: {
          Rng rng(derive_seed(config_.seed, 0x10CEull, step_));
          loss = infonce_sampled(fused, student, config_.tau,
                                 std::size_t(config_.contrastive_pairs), rng);
          break;
        }
        case LossKind::kKl:
          loss = kl_distill(fused, student, config_.tau);
          break;
      }
      loss_value = loss.value;
      apply_update(sub, loss.grad_student, current_lr());
    }

    // FIFO update with the frame's unified features, world-anchored.
    MemoryEntry entry;
    entry.timestamp = frame.timestamp;
    entry.ego_pose = frame.ego_pose;
    entry.anchors.reserve(teacher.visible_points.size());
    for (const Vec3& p : teacher.visible_points)
      entry.anchors.push_back(apply(frame.ego_pose, p));
    entry.features = teacher.unified.features;
    bank.push(std::move(entry));
    return loss_value;
  }

  void apply_update(const PointCloud& cloud, const FeatureMatrix& grad_student,
                    double lr) {
    const std::vector<double> grads =
        point_encode_backward(params_, cloud, grad_student);
    std::vector<double> flat = params_.flatten();
    const std::size_t head = params_.head_offset();
    opt_.step += 1;
    AdamWHyper hyper = config_.adamw(lr);
    adamw_step(std::span<double>(flat.data(), head),
               std::span<const double>(grads.data(), head),
               std::span<double>(opt_.m.data(), head),
               std::span<double>(opt_.v.data(), head), opt_.step, hyper, 1.0);
    adamw_step(std::span<double>(flat.data() + head, flat.size() - head),
               std::span<const double>(grads.data() + head, grads.size() - head),
               std::span<double>(opt_.m.data() + head, opt_.m.size() - head),
               std::span<double>(opt_.v.data() + head, opt_.v.size() - head),
               opt_.step, hyper, config_.head_lr_multiplier);
    params_.unflatten(flat);
  }

  TrainConfig config_;
  std::vector<Sequence> sequences_;
  PointEncoderConfig encoder_config_;
  ImageEncoder image_encoder_;
  PointEncoderParams params_;
  AdamWState opt_;
  std::vector<MemoryBank> banks_;
  std::vector<TraceRow> trace_;
  std::size_t num_frames_ = 0;
  std::uint64_t step_ = 0;
  std::uint64_t mixed_steps_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoint persistence
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'L', 'I', 'M', 'A',
                                             'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace ckpt_detail {

inline void write_section(io_detail::Writer& w, const std::string& name,
                          std::span<const double> data) {
  w.value(std::uint32_t(name.size()));
  w.bytes(name.data(), name.size());
  w.value(std::uint8_t(8));  // f64
  w.value(std::uint64_t(data.size()));
  w.bytes(data.data(), data.size() * sizeof(double));
}

inline std::pair<std::string, std::vector<double>> read_section(
    io_detail::Reader& r) {
  const std::uint32_t name_len = r.value<std::uint32_t>();
  r.require(name_len);
  std::string name(name_len, '\0');
  r.bytes(name.data(), name_len);
  const std::uint8_t dtype = r.value<std::uint8_t>();
  if (dtype != 8) throw ParseError("checkpoint: unsupported section dtype");
  const std::uint64_t count = r.value<std::uint64_t>();
  return {name, r.array<double>(count)};
}

inline std::vector<double> flatten_banks(const std::vector<MemoryBank>& banks) {
  std::vector<double> out;
  out.push_back(double(banks.size()));
  for (const MemoryBank& bank : banks) {
    out.push_back(double(bank.capacity()));
    out.push_back(double(bank.size()));
    for (const MemoryEntry& e : bank.entries()) {
      out.push_back(double(e.timestamp));
      for (double v : e.ego_pose.rotation.m) out.push_back(v);
      out.push_back(e.ego_pose.translation.x);
      out.push_back(e.ego_pose.translation.y);
      out.push_back(e.ego_pose.translation.z);
      out.push_back(double(e.anchors.size()));
      out.push_back(double(e.features.cols()));
      for (const Vec3& a : e.anchors) {
        out.push_back(a.x);
        out.push_back(a.y);
        out.push_back(a.z);
      }
      out.insert(out.end(), e.features.data().begin(), e.features.data().end());
    }
  }
  return out;
}

inline std::vector<MemoryBank> unflatten_banks(std::span<const double> v) {
  std::size_t k = 0;
  auto next = [&]() {
    if (k >= v.size()) throw ParseError("checkpoint: truncated bank section");
    return v[k++];
  };
  const std::size_t num_banks = std::size_t(next());
  std::vector<MemoryBank> banks;
  for (std::size_t b = 0; b < num_banks; ++b) {
    MemoryBank bank{std::size_t(next())};
    const std::size_t entries = std::size_t(next());
    for (std::size_t e = 0; e < entries; ++e) {
      MemoryEntry entry;
      entry.timestamp = std::int64_t(next());
      for (double& m : entry.ego_pose.rotation.m) m = next();
      entry.ego_pose.translation.x = next();
      entry.ego_pose.translation.y = next();
      entry.ego_pose.translation.z = next();
      const std::size_t m_rows = std::size_t(next());
      const std::size_t cols = std::size_t(next());
      entry.anchors.resize(m_rows);
      for (Vec3& a : entry.anchors) {
        a.x = next();
        a.y = next();
        a.z = next();
      }
      entry.features = FeatureMatrix(m_rows, cols);
      for (double& f : entry.features.data()) f = next();
      bank.push(std::move(entry));
    }
    banks.push_back(std::move(bank));
  }
  return banks;
}

}  // namespace ckpt_detail

inline void Trainer::save_checkpoint(const std::string& path) const {
  io_detail::Writer w(path);
  w.bytes(kCheckpointMagic, 8);
  w.value(kCheckpointVersion);
  const std::string config_json = train_config_to_json(config_).dump();
  w.value(std::uint32_t(config_json.size()));
  w.bytes(config_json.data(), config_json.size());
  w.value(std::uint64_t(step_));
  w.value(std::uint64_t(opt_.step));
  w.value(std::uint32_t(4));  // section count
  const std::vector<double> flat = params_.flatten();
  ckpt_detail::write_section(w, "params", flat);
  ckpt_detail::write_section(w, "adam_m", opt_.m);
  ckpt_detail::write_section(w, "adam_v", opt_.v);
  ckpt_detail::write_section(w, "banks", ckpt_detail::flatten_banks(banks_));
}

/// Raw checkpoint contents, decoupled from any training dataset.
struct CheckpointData {
  TrainConfig config;
  std::uint64_t step = 0;
  std::uint64_t adam_step = 0;
  std::vector<double> params;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::vector<MemoryBank> banks;
};

inline CheckpointData read_checkpoint(const std::string& path) {
  io_detail::Reader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw MagicError("bad checkpoint magic: " + path);
  const std::uint32_t version = r.value<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw VersionError("unsupported checkpoint version " +
                       std::to_string(version));
  const std::uint32_t config_len = r.value<std::uint32_t>();
  r.require(config_len);
  std::string config_json(config_len, '\0');
  r.bytes(config_json.data(), config_len);
  nlohmann::json j = nlohmann::json::parse(config_json, nullptr, false);
  if (j.is_discarded()) throw ParseError("checkpoint: bad config JSON");

  CheckpointData data;
  data.config = train_config_from_json(j);
  data.step = r.value<std::uint64_t>();
  data.adam_step = r.value<std::uint64_t>();
  const std::uint32_t sections = r.value<std::uint32_t>();
  bool have_params = false, have_m = false, have_v = false, have_banks = false;
  for (std::uint32_t i = 0; i < sections; ++i) {
    auto [name, payload] = ckpt_detail::read_section(r);
    if (name == "params") {
      data.params = std::move(payload);
      have_params = true;
    } else if (name == "adam_m") {
      data.adam_m = std::move(payload);
      have_m = true;
    } else if (name == "adam_v") {
      data.adam_v = std::move(payload);
      have_v = true;
    } else if (name == "banks") {
      data.banks = ckpt_detail::unflatten_banks(payload);
      have_banks = true;
    } else {
      throw ParseError("checkpoint: unknown section " + name);
    }
  }
  if (!have_params || !have_m || !have_v || !have_banks)
    throw ParseError("checkpoint: missing section");
  return data;
}

inline Trainer Trainer::load_checkpoint(const std::string& path,
                                        std::vector<Sequence> sequences,
                                        PointEncoderConfig encoder_config) {
  CheckpointData data = read_checkpoint(path);
  Trainer trainer(data.config, std::move(sequences), encoder_config);
  if (data.params.size() != trainer.params_.count())
    throw ParseError("checkpoint: parameter count mismatch");
  if (data.adam_m.size() != trainer.opt_.m.size() ||
      data.adam_v.size() != trainer.opt_.v.size())
    throw ParseError("checkpoint: optimizer moment size mismatch");
  if (data.banks.size() != trainer.sequences_.size())
    throw ParseError("checkpoint: bank count does not match sequence count");
  trainer.params_.unflatten(data.params);
  trainer.opt_.m = std::move(data.adam_m);
  trainer.opt_.v = std::move(data.adam_v);
  trainer.banks_ = std::move(data.banks);
  trainer.step_ = data.step;
  trainer.opt_.step = data.adam_step;
  return trainer;
}

// ---------------------------------------------------------------------------
// Linear probing
// ---------------------------------------------------------------------------

struct LinearClassifier {
  int num_classes = 0;
  int feature_dim = 0;
  std::vector<double> weights;  // K x C
  std::vector<double> bias;     // K

  int predict(std::span<const double> f) const {
    int best = 0;
    double best_score = -1e300;
    for (int k = 0; k < num_classes; ++k) {
      double s = bias[k];
      const double* w = weights.data() + std::size_t(k) * feature_dim;
      for (int d = 0; d < feature_dim; ++d) s += w[d] * f[d];
      if (s > best_score) {
        best_score = s;
        best = k;
      }
    }
    return best;
  }
};

/// Multinomial logistic regression by full-batch gradient descent
/// (zero init, fixed iteration count), deterministic.
inline LinearClassifier fit_linear_classifier(const FeatureMatrix& features,
                                              std::span<const std::uint16_t> labels,
                                              int num_classes,
                                              int iterations = 200,
                                              double lr = 0.1) {
  if (features.rows() == 0)
    throw InvalidInputError("fit_linear_classifier: empty training set");
  if (labels.size() != features.rows())
    throw InvalidInputError("fit_linear_classifier: labels/features mismatch");
  const std::size_t n = features.rows();
  const int c = int(features.cols());

  LinearClassifier clf;
  clf.num_classes = num_classes;
  clf.feature_dim = c;
  clf.weights.assign(std::size_t(num_classes) * c, 0.0);
  clf.bias.assign(num_classes, 0.0);

  std::vector<double> grad_w(clf.weights.size());
  std::vector<double> grad_b(clf.bias.size());
  std::vector<double> logits(num_classes);
  for (int it = 0; it < iterations; ++it) {
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    std::fill(grad_b.begin(), grad_b.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto f = features.row(i);
      double mx = -1e300;
      for (int k = 0; k < num_classes; ++k) {
        double s = clf.bias[k];
        const double* w = clf.weights.data() + std::size_t(k) * c;
        for (int d = 0; d < c; ++d) s += w[d] * f[d];
        logits[k] = s;
        mx = std::max(mx, s);
      }
      double sum = 0.0;
      for (double& l : logits) {
        l = std::exp(l - mx);
        sum += l;
      }
      for (int k = 0; k < num_classes; ++k) {
        const double p = logits[k] / sum;
        const double err = p - (k == int(labels[i]) ? 1.0 : 0.0);
        double* gw = grad_w.data() + std::size_t(k) * c;
        for (int d = 0; d < c; ++d) gw[d] += err * f[d];
        grad_b[k] += err;
      }
    }
    const double scale = lr / double(n);
    for (std::size_t i = 0; i < clf.weights.size(); ++i)
      clf.weights[i] -= scale * grad_w[i];
    for (std::size_t i = 0; i < clf.bias.size(); ++i)
      clf.bias[i] -= scale * grad_b[i];
  }
  return clf;
}

struct ProbeOptions {
  int iterations = 200;
  double lr = 0.1;
  std::size_t max_fit_points = 20000;
};

/// Linear probing of a frozen point encoder: fits a linear classifier on the
/// train frames' features and reports mIoU on the eval frames. Scoring is
/// restricted to camera-visible points (the distillation target region).
inline MetricReport linear_probe(const PointEncoderParams& params,
                                 std::span<const Frame* const> train_frames,
                                 std::span<const Frame* const> eval_frames,
                                 int num_classes,
                                 const ProbeOptions& options = {}) {
  if (train_frames.empty() || eval_frames.empty())
    throw InvalidInputError("linear_probe: empty split");

  auto visible_mask = [](const Frame& frame) {
    std::vector<std::uint8_t> mask(frame.cloud.size(), 0);
    const auto corr = build_correspondences(frame.cloud, frame.cameras);
    for (const Correspondence& c : corr) mask[c.point_index] = 1;
    return mask;
  };

  std::vector<std::vector<double>> fit_rows;
  std::vector<std::uint16_t> fit_labels;
  int dim = params.config.feature_dim;
  for (const Frame* frame : train_frames) {
    const FeatureMatrix f = point_encode(params, frame->cloud);
    const auto mask = visible_mask(*frame);
    for (std::size_t i = 0; i < frame->cloud.size(); ++i) {
      if (!mask[i]) continue;
      fit_rows.emplace_back(f.row(i).begin(), f.row(i).end());
      fit_labels.push_back(frame->cloud.label[i]);
    }
  }
  if (fit_rows.empty())
    throw InvalidInputError("linear_probe: no visible points in train split");

  // Deterministic stride subsample for the fit.
  const std::size_t total = fit_rows.size();
  const std::size_t stride =
      total > options.max_fit_points
          ? (total + options.max_fit_points - 1) / options.max_fit_points
          : 1;
  FeatureMatrix fit(total / stride + (total % stride ? 1 : 0), std::size_t(dim));
  std::vector<std::uint16_t> labels;
  std::size_t r = 0;
  for (std::size_t i = 0; i < total; i += stride, ++r) {
    std::copy(fit_rows[i].begin(), fit_rows[i].end(), fit.row(r).begin());
    labels.push_back(fit_labels[i]);
  }

  const LinearClassifier clf = fit_linear_classifier(
      fit, labels, num_classes, options.iterations, options.lr);

  ConfusionMatrix cm{std::size_t(num_classes)};
  for (const Frame* frame : eval_frames) {
    const FeatureMatrix f = point_encode(params, frame->cloud);
    const auto mask = visible_mask(*frame);
    for (std::size_t i = 0; i < frame->cloud.size(); ++i) {
      if (!mask[i]) continue;
      cm.add(frame->cloud.label[i], std::size_t(clf.predict(f.row(i))));
    }
  }

  MetricReport report;
  report.per_class_iou = iou_per_class(cm);
  report.miou = miou(cm);
  return report;
}

}  // namespace lima
