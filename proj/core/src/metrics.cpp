#include "ov3r/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ov3r/errors.hpp"
#include "ov3r/nearest.hpp"

namespace ov3r {

namespace {

double mean_distance_cm(std::span<const Vec3> from, std::span<const Vec3> to, std::optional<double> cap,
                        std::size_t threads) {
  const auto d = nn_distances(from, to, threads);
  double s = 0.0;
  for (double v : d) s += cap ? std::min(v, *cap) : v;
  return 100.0 * s / static_cast<double>(d.size());
}

void check_trajectory(const Trajectory& t, const char* name) {
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (t[i].frame <= t[i - 1].frame) {
      throw ContractError(std::string(name) + " trajectory frame ids must be strictly increasing");
    }
  }
}

}  // namespace

AccuracyCompletion accuracy_completion(std::span<const Vec3> pred, std::span<const Vec3> gt,
                                       std::optional<double> cap_m, std::size_t threads) {
  if (pred.empty() || gt.empty()) throw ContractError("accuracy/completion needs non-empty point sets");
  if (cap_m && !(*cap_m > 0.0)) throw ContractError("distance cap must be positive");
  return {mean_distance_cm(pred, gt, cap_m, threads), mean_distance_cm(gt, pred, cap_m, threads)};
}

Alignment parse_alignment(const std::string& s) {
  if (s == "sim3") return Alignment::sim3;
  if (s == "se3") return Alignment::se3;
  if (s == "none") return Alignment::none;
  throw ContractError("unknown alignment '" + s + "' (expected sim3, se3 or none)");
}

std::string to_string(Alignment a) {
  switch (a) {
    case Alignment::sim3: return "sim3";
    case Alignment::se3: return "se3";
    case Alignment::none: return "none";
  }
  return "none";
}

Sim3 align_trajectories(const Trajectory& pred, const Trajectory& gt, Alignment mode) {
  check_trajectory(pred, "predicted");
  check_trajectory(gt, "ground-truth");
  if (pred.size() != gt.size()) {
    throw ContractError("trajectory lengths differ: " + std::to_string(pred.size()) + " vs " +
                        std::to_string(gt.size()));
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].frame != gt[i].frame) {
      throw ContractError("trajectory frame id mismatch at position " + std::to_string(i) + ": " +
                          std::to_string(pred[i].frame) + " vs " + std::to_string(gt[i].frame));
    }
  }
  if (pred.empty()) throw ContractError("empty trajectories");
  if (mode == Alignment::none) return Sim3();
  if (pred.size() < 3) throw ContractError("trajectory alignment needs at least 3 poses");
  std::vector<Vec3> src, dst;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    src.push_back(pred[i].pose.translation);
    dst.push_back(gt[i].pose.translation);
  }
  return umeyama_align(src, dst, mode == Alignment::sim3);
}

AteResult ate_rmse(const Trajectory& pred, const Trajectory& gt, Alignment mode) {
  AteResult r;
  r.alignment = align_trajectories(pred, gt, mode);
  r.pairs = pred.size();
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    s += (r.alignment.apply(pred[i].pose.translation) - gt[i].pose.translation).squaredNorm();
  }
  r.rmse_cm = 100.0 * std::sqrt(s / static_cast<double>(pred.size()));
  return r;
}

void LabeledCloud::validate() const {
  if (labels.size() != points.size()) {
    throw ShapeError("labeled cloud has " + std::to_string(points.size()) + " points and " +
                     std::to_string(labels.size()) + " labels");
  }
  for (auto l : labels) {
    if (l != kUnlabeled && l >= classes.size()) {
      throw ContractError("label " + std::to_string(l) + " outside a table of " + std::to_string(classes.size()) +
                          " classes");
    }
  }
}

SemanticScores miou_macc(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> gt,
                         std::span<const std::uint32_t> subset) {
  if (pred.size() != gt.size()) throw ContractError("prediction and ground truth cover different point sets");
  if (subset.empty()) throw ContractError("class subset is empty");

  std::uint32_t max_cls = 0;
  for (auto c : subset) max_cls = std::max(max_cls, c);
  std::vector<std::size_t> inter(max_cls + 1, 0), pred_n(max_cls + 1, 0), gt_n(max_cls + 1, 0);
  SemanticScores out;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == kUnlabeled) continue;
    ++out.evaluated_points;
    if (gt[i] <= max_cls) ++gt_n[gt[i]];
    if (pred[i] <= max_cls) ++pred_n[pred[i]];
    if (pred[i] == gt[i] && gt[i] <= max_cls) ++inter[gt[i]];
  }

  std::size_t present = 0;
  for (auto c : subset) {
    ClassScore s;
    s.cls = c;
    s.gt_count = gt_n[c];
    s.present = gt_n[c] > 0;
    if (s.present) {
      const auto uni = gt_n[c] + pred_n[c] - inter[c];
      s.iou = static_cast<double>(inter[c]) / static_cast<double>(uni);
      s.acc = static_cast<double>(inter[c]) / static_cast<double>(gt_n[c]);
      out.miou += s.iou;
      out.macc += s.acc;
      ++present;
    }
    out.per_class.push_back(s);
  }
  if (present == 0) throw ContractError("no class of the subset occurs in the ground truth");
  out.miou /= static_cast<double>(present);
  out.macc /= static_cast<double>(present);
  return out;
}

SemanticScores miou_macc(const LabeledCloud& pred, const LabeledCloud& gt, std::span<const std::uint32_t> subset) {
  pred.validate();
  gt.validate();
  if (pred.points.size() != gt.points.size()) throw ContractError("labeled clouds differ in point count");
  for (std::size_t i = 0; i < gt.points.size(); ++i) {
    if (pred.points[i] != gt.points[i]) {
      throw ContractError("labeled clouds differ at point " + std::to_string(i));
    }
  }
  std::vector<std::uint32_t> all;
  if (subset.empty()) {
    all.resize(gt.classes.size());
    std::iota(all.begin(), all.end(), 0u);
    subset = all;
  }
  return miou_macc(pred.labels, gt.labels, subset);
}

FrequencyWeighted f_weighted(std::span<const double> iou, std::span<const double> acc,
                             std::span<const double> frequencies) {
  if (iou.size() != frequencies.size() || acc.size() != frequencies.size()) {
    throw ContractError("frequency table has " + std::to_string(frequencies.size()) + " entries for " +
                        std::to_string(iou.size()) + " classes");
  }
  if (frequencies.empty()) throw ContractError("no classes to weight");
  double total = 0.0;
  for (double f : frequencies) {
    if (!(f >= 0.0)) throw ContractError("frequencies must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("frequencies must sum to 1");
  FrequencyWeighted r;
  for (std::size_t i = 0; i < frequencies.size(); ++i) {
    r.f_miou += frequencies[i] * iou[i];
    r.f_macc += frequencies[i] * acc[i];
  }
  return r;
}

FrequencyWeighted f_weighted(const SemanticScores& scores) {
  std::vector<double> iou, acc, freq;
  double total = 0.0;
  for (const auto& c : scores.per_class) {
    if (!c.present) continue;
    iou.push_back(c.iou);
    acc.push_back(c.acc);
    freq.push_back(static_cast<double>(c.gt_count));
    total += static_cast<double>(c.gt_count);
  }
  for (double& f : freq) f /= total;
  return f_weighted(iou, acc, freq);
}

}  // namespace ov3r
