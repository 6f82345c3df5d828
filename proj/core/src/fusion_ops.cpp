#include "ov3r/fusion_ops.hpp"

#include <cmath>
#include <sstream>

#include "ov3r/errors.hpp"
#include "ov3r/log.hpp"

namespace ov3r {

void MaskSet::validate() const {
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (masks[i].size() != width * height) {
      throw ShapeError("mask " + std::to_string(i) + " does not match the frame size");
    }
    bool any = false;
    for (auto v : masks[i]) any = any || v != 0;
    if (!any) throw ContractError("mask " + std::to_string(i) + " is empty");
  }
}

FeatureMap FeatureMap::zeros(std::size_t width, std::size_t height, std::size_t depth) {
  return {width, height, depth, std::vector<double>(width * height * depth, 0.0)};
}

FeatureMap FeatureMap::constant(std::size_t width, std::size_t height, std::vector<double> value) {
  FeatureMap fm{width, height, value.size(), {}};
  fm.data.reserve(width * height * value.size());
  for (std::size_t p = 0; p < width * height; ++p) fm.data.insert(fm.data.end(), value.begin(), value.end());
  return fm;
}

Tensor FeatureMap::as_tensor() const { return Tensor({height, width, depth}, data); }

double mask_overlap_fraction(const MaskSet& masks) {
  const auto n = masks.width * masks.height;
  if (n == 0) return 0.0;
  std::size_t overlapping = 0;
  for (std::size_t p = 0; p < n; ++p) {
    int count = 0;
    for (const auto& m : masks.masks) count += m[p] != 0;
    overlapping += count > 1;
  }
  return static_cast<double>(overlapping) / static_cast<double>(n);
}

FeatureMap aggregate_object_clip(const MaskSet& masks, std::span<const FeatureMap> per_mask_features,
                                 std::size_t depth) {
  masks.validate();
  if (per_mask_features.size() != masks.size()) {
    throw ContractError("aggregate_object_clip: " + std::to_string(masks.size()) + " masks but " +
                        std::to_string(per_mask_features.size()) + " feature maps");
  }
  for (const auto& f : per_mask_features) {
    if (f.width != masks.width || f.height != masks.height || f.depth != depth ||
        f.data.size() != masks.width * masks.height * depth) {
      throw ShapeError("aggregate_object_clip: feature map dims disagree with the masks");
    }
  }
  const double overlap = mask_overlap_fraction(masks);
  if (overlap > 0.10) {
    std::ostringstream os;
    os << "object masks overlap on " << overlap * 100.0 << "% of pixels; overlapping features are summed";
    log::warn(os.str());
  }
  FeatureMap out = FeatureMap::zeros(masks.width, masks.height, depth);
  for (std::size_t m = 0; m < masks.size(); ++m) {
    for (std::size_t p = 0; p < masks.width * masks.height; ++p) {
      if (!masks.masks[m][p]) continue;
      for (std::size_t c = 0; c < depth; ++c) out.data[p * depth + c] += per_mask_features[m].data[p * depth + c];
    }
  }
  return out;
}

Tensor tokenize(const FeatureMap& map, std::size_t patch) {
  if (patch == 0) throw ContractError("tokenize: patch size must be positive");
  if (map.width == 0 || map.height == 0 || map.depth == 0) throw ShapeError("tokenize: empty feature map");
  const std::size_t gx = (map.width + patch - 1) / patch;
  const std::size_t gy = (map.height + patch - 1) / patch;
  std::vector<double> out(gx * gy * map.depth, 0.0);
  for (std::size_t ty = 0; ty < gy; ++ty)
    for (std::size_t tx = 0; tx < gx; ++tx) {
      const std::size_t token = ty * gx + tx;
      std::size_t count = 0;
      for (std::size_t y = ty * patch; y < std::min(map.height, (ty + 1) * patch); ++y)
        for (std::size_t x = tx * patch; x < std::min(map.width, (tx + 1) * patch); ++x) {
          const auto f = map.at(y * map.width + x);
          for (std::size_t c = 0; c < map.depth; ++c) out[token * map.depth + c] += f[c];
          ++count;
        }
      for (std::size_t c = 0; c < map.depth; ++c) out[token * map.depth + c] /= static_cast<double>(count);
    }
  return Tensor({gx * gy, map.depth}, std::move(out));
}

double compute_scale(const PointMap& pm) {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pm.valid.size(); ++i) {
    if (!pm.valid[i]) continue;
    total += pm.coords[i].norm();
    ++n;
  }
  if (n == 0) throw ContractError("compute_scale: pointmap has no valid pixels");
  return total / static_cast<double>(n);
}

ad::Var clip_cross_attention(const ad::Var& vit_tokens, const ad::Var& oclip_tokens) {
  if (vit_tokens.dims() != oclip_tokens.dims()) {
    throw ShapeError("clip_cross_attention: " + vit_tokens.value().shape_string() + " vs " +
                     oclip_tokens.value().shape_string());
  }
  return ad::add(vit_tokens, ad::scaled_cross_attention(vit_tokens, oclip_tokens));
}

void LossConfig::validate() const {
  if (!(alpha >= 0.0)) throw ContractError("loss alpha must be non-negative");
  if (scale_mode == ScaleMode::external && (!(gt_scale > 0.0) || !(pred_scale > 0.0))) {
    throw DomainError("external scale factors must be positive");
  }
}

PointPrediction PointPrediction::constant(const PointMap& pm) {
  const auto n = pm.pixel_count();
  std::vector<double> xyz(n * 3, 0.0);
  std::vector<double> conf(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!pm.valid[i]) continue;
    for (int c = 0; c < 3; ++c) xyz[i * 3 + static_cast<std::size_t>(c)] = pm.coords[i](c);
    conf[i] = pm.confidence[i];
  }
  return {ad::Var::constant(Tensor({n, 3}, std::move(xyz))), ad::Var::constant(Tensor({n, 1}, std::move(conf)))};
}

namespace {

ad::Var confidence_loss(const PointPrediction& pred, const PointMap& gt, const LossConfig& cfg, bool scaled) {
  cfg.validate();
  const auto n = gt.pixel_count();
  if (gt.coords.size() != n || gt.valid.size() != n) throw ShapeError("ground-truth pointmap buffers inconsistent");
  if (pred.coords.dims() != Dims{n, 3} || pred.confidence.dims() != Dims{n, 1}) {
    throw ShapeError("loss: prediction dims " + pred.coords.value().shape_string() + " / " +
                     pred.confidence.value().shape_string() + " do not match a " + std::to_string(gt.width) + "x" +
                     std::to_string(gt.height) + " pointmap");
  }
  const auto valid = gt.valid_indices();
  if (valid.empty()) throw ContractError("loss: ground truth has no valid pixels");
  for (auto i : valid) {
    if (!(pred.confidence.value()[i] > 0.0)) {
      throw DomainError("loss: non-positive confidence at valid pixel " + std::to_string(i));
    }
  }

  std::vector<double> gt_xyz;
  gt_xyz.reserve(valid.size() * 3);
  for (auto i : valid)
    for (int c = 0; c < 3; ++c) gt_xyz.push_back(gt.coords[i](c));
  ad::Var gt_points = ad::Var::constant(Tensor({valid.size(), 3}, std::move(gt_xyz)));
  ad::Var pred_points = ad::gather_rows(pred.coords, valid);

  if (scaled) {
    if (cfg.scale_mode == ScaleMode::external) {
      pred_points = ad::scale(pred_points, 1.0 / cfg.pred_scale);
      gt_points = ad::scale(gt_points, 1.0 / cfg.gt_scale);
    } else {
      const ad::Var pred_scale = ad::mean(ad::row_norm(pred_points));
      if (!(pred_scale.value().item() > 0.0)) throw DomainError("loss: predicted points have zero scale");
      pred_points = ad::div_scalar(pred_points, pred_scale);
      gt_points = ad::scale(gt_points, 1.0 / compute_scale(gt));
    }
  }
  const ad::Var residual = ad::row_norm(ad::sub(pred_points, gt_points));
  const ad::Var conf = ad::gather_rows(pred.confidence, valid);
  ad::Var per_pixel = ad::mul(conf, residual);
  if (cfg.alpha != 0.0) per_pixel = ad::sub(per_pixel, ad::scale(ad::log(conf), cfg.alpha));
  return ad::sum(per_pixel);
}

ad::Var window_sum(std::span<const PointPrediction> pred, std::span<const PointMap> gt, const LossConfig& cfg,
                   bool scaled) {
  if (pred.size() != gt.size() || pred.empty()) throw ContractError("loss: window prediction/gt counts differ");
  ad::Var total = confidence_loss(pred[0], gt[0], cfg, scaled);
  for (std::size_t i = 1; i < pred.size(); ++i) total = ad::add(total, confidence_loss(pred[i], gt[i], cfg, scaled));
  return total;
}

FeatureMap checked(const FeatureMap& f) {
  if (f.data.size() != f.width * f.height * f.depth) throw ShapeError("feature map buffer inconsistent");
  return f;
}

}  // namespace

ad::Var loss_i2p(const PointPrediction& pred, const PointMap& gt, const LossConfig& cfg) {
  return confidence_loss(pred, gt, cfg, true);
}

ad::Var loss_i2p(std::span<const PointPrediction> pred, std::span<const PointMap> gt, const LossConfig& cfg) {
  return window_sum(pred, gt, cfg, true);
}

ad::Var loss_l2w(const PointPrediction& pred, const PointMap& gt, const LossConfig& cfg) {
  return confidence_loss(pred, gt, cfg, cfg.scale_world_loss);
}

ad::Var loss_l2w(std::span<const PointPrediction> pred, std::span<const PointMap> gt, const LossConfig& cfg) {
  return window_sum(pred, gt, cfg, cfg.scale_world_loss);
}

ad::Var loss_oclip(const ad::Var& pred, const ad::Var& target) {
  if (pred.dims() != target.dims()) {
    throw ShapeError("loss_oclip: " + pred.value().shape_string() + " vs " + target.value().shape_string());
  }
  return ad::mean(ad::abs(ad::sub(pred, target)));
}

double loss_i2p(const PointMap& pred, const PointMap& gt, const LossConfig& cfg) {
  return loss_i2p(PointPrediction::constant(pred), gt, cfg).value().item();
}

double loss_l2w(const PointMap& pred, const PointMap& gt, const LossConfig& cfg) {
  return loss_l2w(PointPrediction::constant(pred), gt, cfg).value().item();
}

double loss_oclip(const FeatureMap& pred, const FeatureMap& target) {
  const auto a = checked(pred);
  const auto b = checked(target);
  if (a.width != b.width || a.height != b.height || a.depth != b.depth) throw ShapeError("loss_oclip: dims differ");
  return loss_oclip(ad::Var::constant(a.as_tensor().reshaped({a.width * a.height, a.depth})),
                    ad::Var::constant(b.as_tensor().reshaped({b.width * b.height, b.depth})))
      .value()
      .item();
}

}  // namespace ov3r
