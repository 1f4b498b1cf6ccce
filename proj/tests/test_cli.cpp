#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "lima/sequence_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// The CLI under test, provided by the build.
const char* cli_path() { return LIMA_CLI_PATH; }

int run_cli(const std::string& args) {
  const std::string cmd = std::string(cli_path()) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  if (status < 0) return -1;
  return WEXITSTATUS(status);
}

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path p = fs::temp_directory_path() /
                 ("lima_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

// Small scene/train configs shared by the CLI tests.
const char* kSceneJson = R"({"num_frames": 4, "num_points": 900,
  "image_width": 48, "image_height": 24})";
const char* kTrainJson = R"({"epochs": 1, "memory_frames": 2,
  "mix_probability": 0.0, "seed": 7})";

}  // namespace

TEST_CASE("cli: usage errors exit with code 2") {
  CHECK(run_cli("") == 2);
  CHECK(run_cli("generate") == 2);             // missing --out
  CHECK(run_cli("frobnicate --out x") == 2);   // unknown subcommand
}

TEST_CASE("cli: generate is reproducible and loadable") {
  const fs::path dir = work_dir();
  write_file(dir / "scene.json", kSceneJson);

  const std::string flags = "generate --seed 3 --count 2 --config " +
                            (dir / "scene.json").string();
  REQUIRE(run_cli(flags + " --out " + (dir / "gen_a").string()) == 0);
  REQUIRE(run_cli(flags + " --out " + (dir / "gen_b").string()) == 0);

  for (const char* name : {"seq_000.limaseq", "seq_001.limaseq"}) {
    const std::string a = slurp(dir / "gen_a" / name);
    const std::string b = slurp(dir / "gen_b" / name);
    REQUIRE(!a.empty());
    CHECK(a == b);
  }

  const lima::Sequence seq =
      lima::load_sequence((dir / "gen_a" / "seq_000.limaseq").string());
  CHECK(seq.frames.size() == 4);

  // one manifest next to the outputs
  CHECK(fs::exists(dir / "gen_a" / "manifest.json"));
  const json manifest = json::parse(slurp(dir / "gen_a" / "manifest.json"));
  CHECK(manifest["command"] == "generate");
  CHECK(manifest["outputs"].size() == 2);
}

TEST_CASE("cli: pretrain writes a checkpoint and a loss trace") {
  const fs::path dir = work_dir();
  write_file(dir / "train.json", kTrainJson);
  const fs::path data = dir / "gen_a";
  const fs::path ckpt = dir / "model.limackpt";

  REQUIRE(run_cli("pretrain --data " + data.string() + " --config " +
                  (dir / "train.json").string() + " --out " + ckpt.string()) ==
          0);
  CHECK(fs::exists(ckpt));
  const std::string trace = slurp(fs::path(ckpt.string() + ".loss.csv"));
  CHECK(trace.rfind("step,lr,loss\n", 0) == 0);
  // one trace row per regular step: epochs * frames * sequences = 1*4*2
  CHECK(std::count(trace.begin(), trace.end(), '\n') == 9);
  CHECK(fs::exists(fs::path(ckpt.string() + ".manifest.json")));
}

TEST_CASE("cli: invalid loss kind in config exits 2") {
  const fs::path dir = work_dir();
  write_file(dir / "bad_train.json", R"({"loss_kind": "superloss"})");
  CHECK(run_cli("pretrain --data " + (dir / "gen_a").string() + " --config " +
                (dir / "bad_train.json").string() + " --out " +
                (dir / "x.ckpt").string()) == 2);
  write_file(dir / "unknown_key.json", R"({"lr": 0.1})");
  CHECK(run_cli("pretrain --data " + (dir / "gen_a").string() + " --config " +
                (dir / "unknown_key.json").string() + " --out " +
                (dir / "x.ckpt").string()) == 2);
}

TEST_CASE("cli: corrupt checkpoint on --resume exits 3") {
  const fs::path dir = work_dir();
  write_file(dir / "broken.limackpt", "LIMACKPTgarbage");
  CHECK(run_cli("pretrain --data " + (dir / "gen_a").string() + " --out " +
                (dir / "y.ckpt").string() + " --resume " +
                (dir / "broken.limackpt").string()) == 3);
}

TEST_CASE("cli: probe emits a valid metric report") {
  const fs::path dir = work_dir();
  const fs::path report = dir / "probe_report.json";
  REQUIRE(run_cli("probe --checkpoint " + (dir / "model.limackpt").string() +
                  " --data " + (dir / "gen_a").string() + " --report " +
                  report.string()) == 0);
  const json j = json::parse(slurp(report));
  REQUIRE(j.contains("miou"));
  const double miou = j["miou"].get<double>();
  CHECK(miou >= 0.0);
  CHECK(miou <= 1.0);
  REQUIRE(j.contains("per_class_iou"));
  CHECK(j["per_class_iou"].is_array());
}

TEST_CASE("cli: ablate sweeps an axis into a stable CSV") {
  const fs::path dir = work_dir();
  write_file(dir / "ablate_train.json",
             R"({"epochs": 1, "mix_probability": 0.0, "seed": 1})");
  const fs::path csv = dir / "ablate.csv";
  REQUIRE(run_cli("ablate --axis frames --values 0,2 --data " +
                  (dir / "gen_a").string() + " --config " +
                  (dir / "ablate_train.json").string() + " --out " +
                  csv.string()) == 0);
  std::istringstream in(slurp(csv));
  std::string header, row1, row2;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  CHECK(header == "value,probe_miou,train_seconds");
  CHECK(row1.rfind("0,", 0) == 0);
  CHECK(row2.rfind("2,", 0) == 0);

  CHECK(run_cli("ablate --axis nonsense --values 1 --data " +
                (dir / "gen_a").string() + " --out " + csv.string()) == 2);
}

TEST_CASE("cli: metrics on a perfect confusion matrix reports miou 1.0") {
  const fs::path dir = work_dir();
  write_file(dir / "confusion.json",
             R"({"counts": [[5,0,0],[0,3,0],[0,0,9]]})");
  const fs::path report = dir / "confusion_report.json";
  REQUIRE(run_cli("metrics --confusion " + (dir / "confusion.json").string() +
                  " --report " + report.string()) == 0);
  const json j = json::parse(slurp(report));
  CHECK(j["miou"].get<double>() == 1.0);
}

TEST_CASE("cli: metrics on baseline-equal robustness reports mce 100.0") {
  const fs::path dir = work_dir();
  write_file(dir / "robustness.json", R"({
    "clean_miou": 0.8,
    "corruptions": {"fog": [0.7, 0.6, 0.5], "snow": [0.6, 0.5, 0.4]},
    "baseline": {"clean_miou": 0.8,
                 "corruptions": {"fog": [0.7, 0.6, 0.5], "snow": [0.6, 0.5, 0.4]}}
  })");
  const fs::path report = dir / "robustness_report.json";
  REQUIRE(run_cli("metrics --robustness " + (dir / "robustness.json").string() +
                  " --report " + report.string()) == 0);
  const json j = json::parse(slurp(report));
  CHECK(j["mce"].get<double>() == 100.0);
}

TEST_CASE("cli: metrics on exact detections reports map 1 and nds 1") {
  const fs::path dir = work_dir();
  write_file(dir / "detections.json", R"({
    "predictions": [{"class": 0, "x": 1.0, "y": 2.0, "confidence": 1.0},
                    {"class": 1, "x": -3.0, "y": 0.5, "confidence": 0.9}],
    "ground_truth": [{"class": 0, "x": 1.0, "y": 2.0},
                     {"class": 1, "x": -3.0, "y": 0.5}],
    "mtp": [0, 0, 0, 0, 0]
  })");
  const fs::path report = dir / "detections_report.json";
  REQUIRE(run_cli("metrics --detections " + (dir / "detections.json").string() +
                  " --report " + report.string()) == 0);
  const json j = json::parse(slurp(report));
  CHECK(j["map"].get<double>() == 1.0);
  CHECK(j["nds"].get<double>() == 1.0);
}

TEST_CASE("cli: metrics schema violations exit 2") {
  const fs::path dir = work_dir();
  write_file(dir / "bad_confusion.json", R"({"counts": [[1,2],[3]]})");
  CHECK(run_cli("metrics --confusion " + (dir / "bad_confusion.json").string() +
                " --report " + (dir / "r.json").string()) == 2);
  write_file(dir / "bad_robustness.json", R"({"clean_miou": 0.5})");
  CHECK(run_cli("metrics --robustness " +
                (dir / "bad_robustness.json").string() + " --report " +
                (dir / "r.json").string()) == 2);
  // exactly one input is required
  CHECK(run_cli("metrics --report " + (dir / "r.json").string()) == 2);
  CHECK(run_cli("metrics --confusion " + (dir / "bad_confusion.json").string() +
                " --robustness " + (dir / "bad_robustness.json").string() +
                " --report " + (dir / "r.json").string()) == 2);
}
