#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ov3r/geometry.hpp"

namespace ov3r {

inline constexpr std::uint32_t kUnlabeled = std::numeric_limits<std::uint32_t>::max();

struct AccuracyCompletion {
  double accuracy_cm = 0.0;
  double completion_cm = 0.0;
};

/// Mean nearest-neighbour distance pred->gt (accuracy) and gt->pred
/// (completion), in centimetres. Distances above `cap_m` are clamped to it
/// when a cap is given. Throws ContractError on an empty set.
AccuracyCompletion accuracy_completion(std::span<const Vec3> pred, std::span<const Vec3> gt,
                                       std::optional<double> cap_m = std::nullopt, std::size_t threads = 1);

enum class Alignment { sim3, se3, none };
Alignment parse_alignment(const std::string& s);
std::string to_string(Alignment a);

/// Transform taking pred camera centres onto gt ones. Both trajectories must
/// hold the same strictly increasing frame ids (ContractError otherwise);
/// sim3 and se3 need at least 3 pairs.
Sim3 align_trajectories(const Trajectory& pred, const Trajectory& gt, Alignment mode);

struct AteResult {
  double rmse_cm = 0.0;
  Sim3 alignment;
  std::size_t pairs = 0;
};

AteResult ate_rmse(const Trajectory& pred, const Trajectory& gt, Alignment mode);

struct LabeledCloud {
  std::vector<Vec3> points;
  std::vector<std::uint32_t> labels;  // kUnlabeled marks points without a class
  std::vector<std::string> classes;

  /// Throws ShapeError on size mismatch, ContractError on labels outside the table.
  void validate() const;
};

struct ClassScore {
  std::uint32_t cls = 0;
  double iou = 0.0;
  double acc = 0.0;
  std::size_t gt_count = 0;
  bool present = false;  // class occurs in gt; absent classes are left out of means
};

struct SemanticScores {
  std::vector<ClassScore> per_class;
  double miou = 0.0;
  double macc = 0.0;
  std::size_t evaluated_points = 0;
};

/// Per-class IoU and accuracy over points whose gt label is set. Means run
/// over the classes of `subset` present in gt. Throws ContractError when the
/// label arrays differ in length, the subset is empty, or no subset class
/// occurs in gt.
SemanticScores miou_macc(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> gt,
                         std::span<const std::uint32_t> subset);

/// Cloud form: point sets must be identical (ContractError otherwise). An
/// empty subset means every class of the gt table.
SemanticScores miou_macc(const LabeledCloud& pred, const LabeledCloud& gt, std::span<const std::uint32_t> subset = {});

struct FrequencyWeighted {
  double f_miou = 0.0;
  double f_macc = 0.0;
};

/// Frequency-weighted means. Sizes must agree and frequencies must sum to 1
/// (within 1e-9); ContractError otherwise.
FrequencyWeighted f_weighted(std::span<const double> iou, std::span<const double> acc,
                             std::span<const double> frequencies);

/// Frequencies taken from the gt counts of the present classes.
FrequencyWeighted f_weighted(const SemanticScores& scores);

}  // namespace ov3r
