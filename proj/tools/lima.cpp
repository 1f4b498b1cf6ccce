// Command-line surface for the pipeline: dataset generation, pretraining,
// linear probing, ablation sweeps, and metric evaluation.
//
// Exit codes: 0 success, 2 usage/config errors, 3 data or state corruption.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lima/lima.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw SchemaError("invalid JSON: " + path);
  return j;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string git_describe() {
  FILE* pipe = popen("git describe --always --dirty 2>/dev/null", "r");
  if (!pipe) return "unknown";
  char buf[256] = {0};
  std::string out;
  if (fgets(buf, sizeof(buf), pipe)) out = buf;
  pclose(pipe);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r'))
    out.pop_back();
  return out.empty() ? "unknown" : out;
}

void write_manifest(const std::string& path, const std::string& command,
                    const json& config, std::uint64_t seed,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs,
                    double wall_seconds) {
  json m;
  m["command"] = command;
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                (unsigned long long)fnv1a(config.dump()));
  m["config_hash"] = hash;
  m["seed"] = seed;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  m["wall_clock_seconds"] = wall_seconds;
  m["git_describe"] = git_describe();
  std::ofstream out(path);
  out << m.dump(2) << "\n";
}

// Sequence files from a directory (sorted) or a single file path.
std::vector<std::string> sequence_paths(const std::string& data) {
  std::vector<std::string> paths;
  if (fs::is_directory(data)) {
    for (const auto& entry : fs::directory_iterator(data))
      if (entry.path().extension() == ".limaseq")
        paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
  } else if (fs::exists(data)) {
    paths.push_back(data);
  }
  if (paths.empty())
    throw lima::ParseError("no .limaseq files under: " + data);
  return paths;
}

std::vector<lima::Sequence> load_dataset(const std::string& data) {
  std::vector<lima::Sequence> seqs;
  for (const std::string& p : sequence_paths(data))
    seqs.push_back(lima::load_sequence(p));
  return seqs;
}

// Even-indexed frames fit the probe, odd-indexed frames evaluate it.
void probe_split(const std::vector<lima::Sequence>& seqs,
                 std::vector<const lima::Frame*>& fit,
                 std::vector<const lima::Frame*>& eval) {
  for (const lima::Sequence& s : seqs)
    for (std::size_t t = 0; t < s.frames.size(); ++t)
      (t % 2 == 0 ? fit : eval).push_back(&s.frames[t]);
}

lima::TrainConfig train_config_from_file(const std::string& path) {
  if (path.empty()) return lima::TrainConfig{};
  std::ifstream in(path);
  if (!in) throw lima::ConfigError("cannot open config: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw lima::ConfigError("invalid config JSON: " + path);
  return lima::train_config_from_json(j);
}

lima::PointEncoderParams params_from_checkpoint(const lima::CheckpointData& ckpt) {
  lima::PointEncoderParams params =
      lima::make_point_encoder(lima::PointEncoderConfig{}, ckpt.config.seed);
  if (ckpt.params.size() != params.count())
    throw lima::ParseError("checkpoint/encoder dimension mismatch");
  params.unflatten(ckpt.params);
  return params;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

int cmd_generate(std::uint64_t seed, const std::string& config_path,
                 const std::string& out_dir, int count) {
  const auto t0 = std::chrono::steady_clock::now();
  lima::SceneConfig scene;
  if (!config_path.empty()) scene = lima::scene_config_from_json(read_json_file(config_path));

  fs::create_directories(out_dir);
  std::vector<std::string> outputs;
  for (int i = 0; i < count; ++i) {
    const lima::Sequence seq =
        lima::generate_sequence(seed + std::uint64_t(i), scene, std::uint32_t(i));
    char name[64];
    std::snprintf(name, sizeof(name), "seq_%03d.limaseq", i);
    const std::string path = (fs::path(out_dir) / name).string();
    lima::save_sequence(seq, path);
    outputs.push_back(path);

    std::size_t total_points = 0;
    for (const auto& f : seq.frames) total_points += f.cloud.size();
    std::cout << name << ": frames=" << seq.frames.size()
              << " cameras=" << seq.frames[0].cameras.size()
              << " classes=" << seq.num_classes
              << " avg_points=" << total_points / seq.frames.size() << "\n";
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest((fs::path(out_dir) / "manifest.json").string(), "generate",
                 lima::scene_config_to_json(scene), seed,
                 config_path.empty() ? std::vector<std::string>{}
                                     : std::vector<std::string>{config_path},
                 outputs, secs);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// pretrain
// ---------------------------------------------------------------------------

void write_loss_trace(const std::string& path,
                      const std::vector<lima::TraceRow>& trace) {
  std::ofstream out(path);
  out << "step,lr,loss\n";
  char line[128];
  for (const lima::TraceRow& row : trace) {
    std::snprintf(line, sizeof(line), "%llu,%.17g,%.17g\n",
                  (unsigned long long)row.step, row.lr, row.loss);
    out << line;
  }
}

int cmd_pretrain(const std::string& data, const std::string& config_path,
                 const std::string& out, const std::string& resume) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<lima::Sequence> seqs = load_dataset(data);

  lima::Trainer trainer = [&]() {
    if (!resume.empty()) {
      lima::Trainer t = lima::Trainer::load_checkpoint(resume, std::move(seqs));
      if (!config_path.empty()) {
        const lima::TrainConfig given = train_config_from_file(config_path);
        if (lima::train_config_to_json(given) !=
            lima::train_config_to_json(t.config()))
          throw lima::ConfigError(
              "--config disagrees with the checkpoint's configuration");
      }
      return t;
    }
    return lima::Trainer(train_config_from_file(config_path), std::move(seqs));
  }();

  trainer.run();
  trainer.save_checkpoint(out);
  write_loss_trace(out + ".loss.csv", trainer.trace());

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::vector<std::string> inputs = sequence_paths(data);
  if (!resume.empty()) inputs.push_back(resume);
  write_manifest(out + ".manifest.json", "pretrain",
                 lima::train_config_to_json(trainer.config()),
                 trainer.config().seed, inputs, {out, out + ".loss.csv"}, secs);
  std::cout << "steps=" << trainer.step()
            << " final_loss=" << (trainer.trace().empty() ? 0.0 : trainer.trace().back().loss)
            << " checkpoint=" << out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// probe
// ---------------------------------------------------------------------------

int cmd_probe(const std::string& checkpoint, const std::string& data,
              const std::string& report) {
  const auto t0 = std::chrono::steady_clock::now();
  const lima::CheckpointData ckpt = lima::read_checkpoint(checkpoint);
  const lima::PointEncoderParams params = params_from_checkpoint(ckpt);

  const std::vector<lima::Sequence> seqs = load_dataset(data);
  std::vector<const lima::Frame*> fit, eval;
  probe_split(seqs, fit, eval);
  const lima::MetricReport rep =
      lima::linear_probe(params, fit, eval, int(seqs[0].num_classes));

  const json j = rep.to_json();
  std::ofstream out(report);
  out << j.dump(2) << "\n";
  std::cout << j.dump() << "\n";

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::vector<std::string> inputs = sequence_paths(data);
  inputs.push_back(checkpoint);
  write_manifest(report + ".manifest.json", "probe",
                 lima::train_config_to_json(ckpt.config), ckpt.config.seed,
                 inputs, {report}, secs);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

std::vector<std::string> split_csv(const std::string& values) {
  std::vector<std::string> out;
  std::stringstream ss(values);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int worker_cap() {
  if (const char* env = std::getenv("LIMA_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return int(std::max(1u, std::thread::hardware_concurrency()));
}

int cmd_ablate(const std::string& axis, const std::string& values_csv,
               const std::string& data, const std::string& config_path,
               const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::string> values = split_csv(values_csv);
  if (values.empty()) throw lima::ConfigError("ablate: no values given");
  const lima::TrainConfig base = train_config_from_file(config_path);

  // Validate the axis and build one config per value.
  std::vector<lima::TrainConfig> configs;
  for (const std::string& v : values) {
    lima::TrainConfig cfg = base;
    if (axis == "frames") {
      cfg.memory_frames = std::stoi(v);
      if (cfg.memory_frames < 0) throw lima::ConfigError("ablate: bad frame count " + v);
    } else if (axis == "aggregation") {
      if (v == "mean") cfg.aggregation_mode = lima::AggregationMode::kMean;
      else if (v == "max") cfg.aggregation_mode = lima::AggregationMode::kMax;
      else throw lima::ConfigError("ablate: unknown aggregation " + v);
    } else if (axis == "loss") {
      json j;
      j["loss_kind"] = v;
      const lima::TrainConfig parsed = lima::train_config_from_json(j);
      cfg.loss_kind = parsed.loss_kind;
    } else {
      throw lima::ConfigError("ablate: unknown axis " + axis);
    }
    configs.push_back(cfg);
  }

  const std::vector<lima::Sequence> all = load_dataset(data);
  if (all.size() < 2)
    throw lima::ConfigError("ablate: need at least 2 sequences (train + probe)");
  const std::vector<lima::Sequence> train(all.begin(), all.end() - 1);
  std::vector<const lima::Frame*> fit, eval;
  probe_split({all.back()}, fit, eval);

  struct Row {
    double miou = 0.0;
    double seconds = 0.0;
  };
  std::vector<Row> rows(values.size());
  std::atomic<std::size_t> next{0};
  auto run_one = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= values.size()) return;
      const auto s0 = std::chrono::steady_clock::now();
      lima::Trainer trainer(configs[i], train);
      trainer.run();
      const lima::MetricReport rep = lima::linear_probe(
          trainer.params(), fit, eval, int(all.back().num_classes));
      rows[i].miou = rep.miou.value_or(0.0);
      rows[i].seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - s0)
                            .count();
    }
  };
  const int threads =
      std::min<int>(worker_cap(), int(values.size()));
  if (threads <= 1) {
    run_one();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(run_one);
    for (auto& th : pool) th.join();
  }

  std::ofstream csv(out);
  csv << "value,probe_miou,train_seconds\n";
  char line[160];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(line, sizeof(line), "%s,%.6f,%.3f\n", values[i].c_str(),
                  rows[i].miou, rows[i].seconds);
    csv << line;
    std::cout << line;
  }

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json cfg_json = lima::train_config_to_json(base);
  cfg_json["ablate_axis"] = axis;
  cfg_json["ablate_values"] = values;
  write_manifest(out + ".manifest.json", "ablate", cfg_json, base.seed,
                 sequence_paths(data), {out}, secs);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

double require_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw SchemaError("expected number at " + path);
  return j.get<double>();
}

lima::MetricReport metrics_from_confusion(const json& j) {
  if (!j.contains("counts")) throw SchemaError("missing $.counts");
  const json& counts = j["counts"];
  if (!counts.is_array() || counts.empty())
    throw SchemaError("expected non-empty array at $.counts");
  const std::size_t k = counts.size();
  lima::ConfusionMatrix cm(k);
  for (std::size_t r = 0; r < k; ++r) {
    const json& row = counts[r];
    if (!row.is_array() || row.size() != k)
      throw SchemaError("expected row of length " + std::to_string(k) +
                        " at $.counts[" + std::to_string(r) + "]");
    for (std::size_t c = 0; c < k; ++c) {
      const json& cell = row[c];
      if (!cell.is_number_integer() || cell.get<std::int64_t>() < 0)
        throw SchemaError("expected non-negative integer at $.counts[" +
                          std::to_string(r) + "][" + std::to_string(c) + "]");
      cm.add(r, c, cell.get<std::uint64_t>());
    }
  }
  lima::MetricReport rep;
  rep.per_class_iou = lima::iou_per_class(cm);
  rep.miou = lima::miou(cm);
  return rep;
}

std::map<std::string, std::array<double, 3>> parse_corruptions(
    const json& j, const std::string& path) {
  if (!j.is_object() || j.empty())
    throw SchemaError("expected non-empty object at " + path);
  std::map<std::string, std::array<double, 3>> out;
  for (const auto& [name, arr] : j.items()) {
    if (!arr.is_array() || arr.size() != 3)
      throw SchemaError("expected 3 severity mIoUs at " + path + "." + name);
    for (int s = 0; s < 3; ++s)
      out[name][std::size_t(s)] = require_number(
          arr[s], path + "." + name + "[" + std::to_string(s) + "]");
  }
  return out;
}

lima::MetricReport metrics_from_robustness(const json& j) {
  if (!j.contains("clean_miou")) throw SchemaError("missing $.clean_miou");
  if (!j.contains("corruptions")) throw SchemaError("missing $.corruptions");
  if (!j.contains("baseline")) throw SchemaError("missing $.baseline");
  const json& base = j["baseline"];
  if (!base.contains("clean_miou"))
    throw SchemaError("missing $.baseline.clean_miou");
  if (!base.contains("corruptions"))
    throw SchemaError("missing $.baseline.corruptions");

  lima::RobustnessInput inp;
  inp.clean_miou = require_number(j["clean_miou"], "$.clean_miou");
  inp.per_corruption = parse_corruptions(j["corruptions"], "$.corruptions");
  inp.baseline_clean_miou =
      require_number(base["clean_miou"], "$.baseline.clean_miou");
  inp.baseline_per_corruption =
      parse_corruptions(base["corruptions"], "$.baseline.corruptions");
  if (inp.per_corruption.size() != inp.baseline_per_corruption.size())
    throw SchemaError("corruption sets differ between model and baseline");

  const lima::RobustnessReport rob = lima::robustness_metrics(inp);
  lima::MetricReport rep;
  rep.mce = rob.mce * 100.0;  // reported as percentages
  rep.mrr = rob.mrr * 100.0;
  return rep;
}

lima::MetricReport metrics_from_detections(const json& j) {
  lima::DetectionSet det;
  if (!j.contains("predictions")) throw SchemaError("missing $.predictions");
  if (!j.contains("ground_truth")) throw SchemaError("missing $.ground_truth");
  auto parse_list = [&](const json& arr, const std::string& path, bool pred) {
    if (!arr.is_array()) throw SchemaError("expected array at " + path);
    std::vector<lima::Detection> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const json& e = arr[i];
      const std::string at = path + "[" + std::to_string(i) + "]";
      if (!e.is_object() || !e.contains("class") || !e.contains("x") ||
          !e.contains("y") || (pred && !e.contains("confidence")))
        throw SchemaError("malformed detection at " + at);
      lima::Detection d;
      if (!e["class"].is_number_integer())
        throw SchemaError("expected integer at " + at + ".class");
      d.class_id = e["class"].get<int>();
      d.x = require_number(e["x"], at + ".x");
      d.y = require_number(e["y"], at + ".y");
      if (pred) {
        d.confidence = require_number(e["confidence"], at + ".confidence");
        if (d.confidence < 0.0 || d.confidence > 1.0)
          throw SchemaError("confidence out of [0,1] at " + at + ".confidence");
      }
      out.push_back(d);
    }
    return out;
  };
  det.predictions = parse_list(j["predictions"], "$.predictions", true);
  det.ground_truth = parse_list(j["ground_truth"], "$.ground_truth", false);

  lima::MetricReport rep;
  rep.map = lima::mean_average_precision(det);
  if (j.contains("mtp")) {
    const json& mtp = j["mtp"];
    if (!mtp.is_array() || mtp.size() != 5)
      throw SchemaError("expected 5 values at $.mtp");
    std::vector<double> v;
    for (std::size_t i = 0; i < 5; ++i)
      v.push_back(require_number(mtp[i], "$.mtp[" + std::to_string(i) + "]"));
    rep.nds = lima::nds(*rep.map, v);
  }
  return rep;
}

int cmd_metrics(const std::string& confusion, const std::string& robustness,
                const std::string& detections, const std::string& report) {
  const auto t0 = std::chrono::steady_clock::now();
  const int given =
      int(!confusion.empty()) + int(!robustness.empty()) + int(!detections.empty());
  if (given != 1)
    throw lima::ConfigError(
        "metrics: exactly one of --confusion/--robustness/--detections");

  std::string input;
  lima::MetricReport rep;
  if (!confusion.empty()) {
    input = confusion;
    rep = metrics_from_confusion(read_json_file(confusion));
  } else if (!robustness.empty()) {
    input = robustness;
    rep = metrics_from_robustness(read_json_file(robustness));
  } else {
    input = detections;
    rep = metrics_from_detections(read_json_file(detections));
  }

  const json j = rep.to_json();
  std::ofstream out(report);
  out << j.dump(2) << "\n";
  std::cout << j.dump() << "\n";
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(report + ".manifest.json", "metrics", json::object(), 0,
                 {input}, {report}, secs);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-term image-to-LiDAR pretraining pipeline"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Write synthetic driving sequences");
  std::uint64_t gen_seed = 0;
  std::string gen_config, gen_out;
  int gen_count = 1;
  gen->add_option("--seed", gen_seed, "Base seed");
  gen->add_option("--config", gen_config, "Scene config JSON");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--count", gen_count, "Number of sequences")
      ->check(CLI::PositiveNumber);

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Run the pretraining loop");
  std::string pre_data, pre_config, pre_out, pre_resume;
  pre->add_option("--data", pre_data, "Sequence directory or file")->required();
  pre->add_option("--config", pre_config, "Train config JSON");
  pre->add_option("--out", pre_out, "Checkpoint output path")->required();
  pre->add_option("--resume", pre_resume, "Checkpoint to resume from");

  // probe
  auto* prb = app.add_subcommand("probe", "Linear-probe a frozen checkpoint");
  std::string prb_ckpt, prb_data, prb_report;
  prb->add_option("--checkpoint", prb_ckpt, "Checkpoint path")->required();
  prb->add_option("--data", prb_data, "Held-out sequence data")->required();
  prb->add_option("--report", prb_report, "Metric report JSON path")->required();

  // ablate
  auto* abl = app.add_subcommand("ablate", "Sweep one configuration axis");
  std::string abl_axis, abl_values, abl_data, abl_config, abl_out;
  abl->add_option("--axis", abl_axis, "frames | aggregation | loss")->required();
  abl->add_option("--values", abl_values, "Comma-separated values")->required();
  abl->add_option("--data", abl_data, "Sequence directory")->required();
  abl->add_option("--config", abl_config, "Base train config JSON");
  abl->add_option("--out", abl_out, "Output CSV path")->required();

  // metrics
  auto* met = app.add_subcommand("metrics", "Evaluate metric inputs");
  std::string met_confusion, met_robustness, met_detections, met_report;
  met->add_option("--confusion", met_confusion, "Confusion-matrix JSON");
  met->add_option("--robustness", met_robustness, "Robustness JSON");
  met->add_option("--detections", met_detections, "Detection JSON");
  met->add_option("--report", met_report, "Metric report JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed())
      return cmd_generate(gen_seed, gen_config, gen_out, gen_count);
    if (pre->parsed())
      return cmd_pretrain(pre_data, pre_config, pre_out, pre_resume);
    if (prb->parsed()) return cmd_probe(prb_ckpt, prb_data, prb_report);
    if (abl->parsed())
      return cmd_ablate(abl_axis, abl_values, abl_data, abl_config, abl_out);
    if (met->parsed())
      return cmd_metrics(met_confusion, met_robustness, met_detections,
                         met_report);
  } catch (const lima::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const lima::ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
