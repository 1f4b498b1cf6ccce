#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lima/common.hpp"

#include <json.hpp>

namespace lima {

// ---------------------------------------------------------------------------
// Segmentation metrics
// ---------------------------------------------------------------------------

/// K x K counts; rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = 0)
      : k_(num_classes), counts_(num_classes * num_classes, 0) {}

  std::size_t num_classes() const { return k_; }

  void add(std::size_t truth, std::size_t pred, std::uint64_t n = 1) {
    counts_[truth * k_ + pred] += n;
  }

  std::uint64_t at(std::size_t truth, std::size_t pred) const {
    return counts_[truth * k_ + pred];
  }
  std::uint64_t& at(std::size_t truth, std::size_t pred) {
    return counts_[truth * k_ + pred];
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto v : counts_) t += v;
    return t;
  }

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

/// IoU_i = TP_i / (TP_i + FP_i + FN_i); classes with a zero denominator
/// report NaN here and are excluded from the mean.
inline std::vector<double> iou_per_class(const ConfusionMatrix& cm) {
  const std::size_t k = cm.num_classes();
  std::vector<double> iou(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double tp = double(cm.at(i, i));
    double fp = 0.0, fn = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i) continue;
      fp += double(cm.at(j, i));
      fn += double(cm.at(i, j));
    }
    const double denom = tp + fp + fn;
    iou[i] = denom > 0.0 ? tp / denom : std::nan("");
  }
  return iou;
}

inline double miou(const ConfusionMatrix& cm) {
  const auto iou = iou_per_class(cm);
  double sum = 0.0;
  std::size_t valid = 0;
  for (double v : iou)
    if (!std::isnan(v)) {
      sum += v;
      ++valid;
    }
  return valid == 0 ? 0.0 : sum / double(valid);
}

// ---------------------------------------------------------------------------
// Robustness metrics (corruption error / resilience rate)
// ---------------------------------------------------------------------------

/// Per-corruption mIoU at the three severity levels, for the evaluated model
/// and the baseline; `clean_miou` is the uncorrupted score.
struct RobustnessInput {
  double clean_miou = 0.0;
  std::map<std::string, std::array<double, 3>> per_corruption;
  double baseline_clean_miou = 0.0;
  std::map<std::string, std::array<double, 3>> baseline_per_corruption;
};

struct RobustnessReport {
  std::map<std::string, double> ce;
  std::map<std::string, double> rr;
  double mce = 0.0;
  double mrr = 0.0;
};

/// CE_i = sum_j (1 - IoU_ij) / sum_j (1 - IoU_ij^base);
/// RR_i = sum_j IoU_ij / (3 * IoU_clean). Means are over corruption types.
inline RobustnessReport robustness_metrics(const RobustnessInput& inp) {
  RobustnessReport rep;
  if (inp.per_corruption.empty())
    throw EmptyInputError("robustness_metrics: no corruptions");
  double ce_sum = 0.0, rr_sum = 0.0;
  for (const auto& [name, ious] : inp.per_corruption) {
    const auto base_it = inp.baseline_per_corruption.find(name);
    if (base_it == inp.baseline_per_corruption.end())
      throw InvalidInputError("robustness_metrics: baseline missing corruption " +
                              name);
    double num = 0.0, den = 0.0, iou_sum = 0.0;
    for (int j = 0; j < 3; ++j) {
      num += 1.0 - ious[j];
      den += 1.0 - base_it->second[j];
      iou_sum += ious[j];
    }
    if (den == 0.0)
      throw DegenerateInputError(
          "robustness_metrics: baseline denominator is zero for " + name);
    if (inp.clean_miou == 0.0)
      throw DegenerateInputError("robustness_metrics: clean mIoU is zero");
    const double ce = num / den;
    const double rr = iou_sum / (3.0 * inp.clean_miou);
    rep.ce[name] = ce;
    rep.rr[name] = rr;
    ce_sum += ce;
    rr_sum += rr;
  }
  rep.mce = ce_sum / double(inp.per_corruption.size());
  rep.mrr = rr_sum / double(inp.per_corruption.size());
  return rep;
}

// ---------------------------------------------------------------------------
// Detection metrics (center-distance AP, NDS)
// ---------------------------------------------------------------------------

struct Detection {
  int class_id = 0;
  double x = 0.0;
  double y = 0.0;
  double confidence = 0.0;  // predictions only
};

struct DetectionSet {
  std::vector<Detection> predictions;
  std::vector<Detection> ground_truth;
};

inline constexpr double kApThresholds[4] = {0.5, 1.0, 2.0, 4.0};

/// AP for one class at one center-distance threshold: predictions are taken
/// in descending confidence (ties by insertion order); each is matched to
/// the nearest unmatched ground truth within the threshold; AP is the
/// 101-point interpolated area under precision-recall.
inline double average_precision(const DetectionSet& det, int class_id,
                                double dist_threshold) {
  std::vector<std::size_t> gts;
  for (std::size_t i = 0; i < det.ground_truth.size(); ++i)
    if (det.ground_truth[i].class_id == class_id) gts.push_back(i);
  if (gts.empty()) return std::nan("");

  std::vector<std::size_t> preds;
  for (std::size_t i = 0; i < det.predictions.size(); ++i)
    if (det.predictions[i].class_id == class_id) preds.push_back(i);
  if (preds.empty()) return 0.0;

  std::stable_sort(preds.begin(), preds.end(), [&](std::size_t a, std::size_t b) {
    return det.predictions[a].confidence > det.predictions[b].confidence;
  });

  std::vector<bool> taken(gts.size(), false);
  std::vector<bool> is_tp(preds.size(), false);
  for (std::size_t pi = 0; pi < preds.size(); ++pi) {
    const Detection& p = det.predictions[preds[pi]];
    double best_d = dist_threshold;
    std::ptrdiff_t best = -1;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (taken[gi]) continue;
      const Detection& g = det.ground_truth[gts[gi]];
      const double d = std::hypot(p.x - g.x, p.y - g.y);
      if (d < best_d) {  // strict: ties between ground truths keep the first
        best_d = d;
        best = std::ptrdiff_t(gi);
      }
    }
    if (best >= 0) {
      taken[std::size_t(best)] = true;
      is_tp[pi] = true;
    }
  }

  // precision/recall after each prediction, then 101-point interpolation
  std::vector<double> precision(preds.size()), recall(preds.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (is_tp[i]) ++tp;
    precision[i] = double(tp) / double(i + 1);
    recall[i] = double(tp) / double(gts.size());
  }
  double ap = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double target = double(r) / 100.0;
    double best = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (recall[i] >= target) best = std::max(best, precision[i]);
    ap += best;
  }
  return ap / 101.0;
}

/// Mean AP over classes (those with ground truth) and the center-distance
/// thresholds {0.5, 1, 2, 4} meters.
inline double mean_average_precision(const DetectionSet& det) {
  std::vector<int> classes;
  for (const auto& g : det.ground_truth)
    if (std::find(classes.begin(), classes.end(), g.class_id) == classes.end())
      classes.push_back(g.class_id);
  std::sort(classes.begin(), classes.end());
  if (classes.empty()) return 0.0;
  double sum = 0.0;
  std::size_t cells = 0;
  for (int c : classes)
    for (double thr : kApThresholds) {
      const double ap = average_precision(det, c, thr);
      if (!std::isnan(ap)) {
        sum += ap;
        ++cells;
      }
    }
  return cells == 0 ? 0.0 : sum / double(cells);
}

/// NDS = 1/10 * (5 * mAP + sum over the five mTP errors of (1 - min(1, mTP))).
inline double nds(double map_value, std::span<const double> mtp_values) {
  if (!(map_value >= 0.0 && map_value <= 1.0))
    throw InvalidInputError("nds: mAP must be in [0, 1]");
  if (mtp_values.size() != 5)
    throw InvalidInputError("nds: expected exactly 5 mTP values");
  double acc = 5.0 * map_value;
  for (double v : mtp_values) {
    if (v < 0.0) throw InvalidInputError("nds: mTP values must be >= 0");
    acc += 1.0 - std::min(1.0, v);
  }
  return acc / 10.0;
}

// ---------------------------------------------------------------------------
// Metric report
// ---------------------------------------------------------------------------

struct MetricReport {
  std::optional<double> miou;
  std::optional<std::vector<double>> per_class_iou;
  std::optional<double> mce;
  std::optional<double> mrr;
  std::optional<double> map;
  std::optional<double> nds;

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    if (miou) j["miou"] = *miou;
    if (per_class_iou) {
      nlohmann::json arr = nlohmann::json::array();
      for (double v : *per_class_iou)
        arr.push_back(std::isnan(v) ? nlohmann::json() : nlohmann::json(v));
      j["per_class_iou"] = arr;
    }
    if (mce) j["mce"] = *mce;
    if (mrr) j["mrr"] = *mrr;
    if (map) j["map"] = *map;
    if (nds) j["nds"] = *nds;
    return j;
  }
};

}  // namespace lima
