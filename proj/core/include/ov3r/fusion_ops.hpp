#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ov3r/autodiff.hpp"
#include "ov3r/pointmap.hpp"
#include "ov3r/tensor.hpp"

namespace ov3r {

using Mask = std::vector<std::uint8_t>;

/// Object masks over one frame. Each mask is non-empty and width*height long.
struct MaskSet {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Mask> masks;

  void validate() const;
  std::size_t size() const noexcept { return masks.size(); }
};

/// Dense H x W x D feature map.
struct FeatureMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t depth = 0;
  std::vector<double> data;  // (y * width + x) * depth + channel

  static FeatureMap zeros(std::size_t width, std::size_t height, std::size_t depth);
  static FeatureMap constant(std::size_t width, std::size_t height, std::vector<double> value);
  std::span<const double> at(std::size_t pixel) const { return {data.data() + pixel * depth, depth}; }
  Tensor as_tensor() const;  // H x W x D
};

/// Object-level CLIP map: sum over masks of mask * feature. Pixels covered by
/// several masks receive the sum (a warning is logged when more than 10% of
/// pixels overlap); uncovered pixels are zero.
FeatureMap aggregate_object_clip(const MaskSet& masks, std::span<const FeatureMap> per_mask_features,
                                 std::size_t depth);

/// Fraction of pixels claimed by two or more masks.
double mask_overlap_fraction(const MaskSet& masks);

/// Average-pools non-overlapping patch x patch blocks into a T x D token
/// matrix (row-major over the patch grid; edge patches pool what they cover).
Tensor tokenize(const FeatureMap& map, std::size_t patch = 16);

/// Mean Euclidean norm of the valid points. Throws ContractError without any.
double compute_scale(const PointMap& pm);

/// F_vit + attention(F_vit over F_oclip). Both T x d.
ad::Var clip_cross_attention(const ad::Var& vit_tokens, const ad::Var& oclip_tokens);

enum class ScaleMode { external, mean_norm };

struct LossConfig {
  double alpha = 0.0;
  ScaleMode scale_mode = ScaleMode::mean_norm;
  // Used when scale_mode == external.
  double gt_scale = 1.0;
  double pred_scale = 1.0;
  // The local-to-world loss is unscaled unless this is set.
  bool scale_world_loss = false;

  void validate() const;
};

/// Prediction side of a confidence-aware loss: N x 3 points and N x 1
/// confidences, N = gt.width * gt.height.
struct PointPrediction {
  ad::Var coords;
  ad::Var confidence;

  static PointPrediction constant(const PointMap& pm);
};

/// Sum over valid ground-truth pixels of C * |P'/z' - P/z| - alpha log C.
ad::Var loss_i2p(const PointPrediction& pred, const PointMap& gt, const LossConfig& cfg);
/// Sum of loss_i2p over the frames of a window.
ad::Var loss_i2p(std::span<const PointPrediction> pred, std::span<const PointMap> gt, const LossConfig& cfg);

/// As loss_i2p with no scale normalisation (unless cfg.scale_world_loss).
ad::Var loss_l2w(const PointPrediction& pred, const PointMap& gt, const LossConfig& cfg);
ad::Var loss_l2w(std::span<const PointPrediction> pred, std::span<const PointMap> gt, const LossConfig& cfg);

/// Mean absolute difference between predicted and extracted feature maps.
ad::Var loss_oclip(const ad::Var& pred, const ad::Var& target);

double loss_i2p(const PointMap& pred, const PointMap& gt, const LossConfig& cfg);
double loss_l2w(const PointMap& pred, const PointMap& gt, const LossConfig& cfg);
double loss_oclip(const FeatureMap& pred, const FeatureMap& target);

}  // namespace ov3r
