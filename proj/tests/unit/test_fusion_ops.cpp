#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "ov3r/errors.hpp"
#include "ov3r/fusion_ops.hpp"
#include "ov3r/log.hpp"

namespace ov3r {
namespace {

PointMap simple_map() {
  PointMap pm = PointMap::blank(2, 2);
  pm.coords = {Vec3(0, 0, 1), Vec3(1, 0, 2), Vec3(0, 1, 3), Vec3(5, 5, 5)};
  pm.valid = {1, 1, 1, 0};
  return pm;
}

TEST(MaskSet, Validate) {
  MaskSet m{2, 1, {{1, 0}}};
  EXPECT_NO_THROW(m.validate());
  m.masks.push_back({0, 0});
  EXPECT_THROW(m.validate(), ContractError);
  m.masks.back() = {1};
  EXPECT_THROW(m.validate(), ShapeError);
}

TEST(ObjectClip, SumsMaskedFeatures) {
  const MaskSet masks{2, 1, {{1, 0}, {0, 1}}};
  const std::vector<FeatureMap> f{FeatureMap::constant(2, 1, {1.0, 2.0}), FeatureMap::constant(2, 1, {3.0, 4.0})};
  const auto out = aggregate_object_clip(masks, f, 2);
  EXPECT_EQ(out.data, (std::vector<double>{1, 2, 3, 4}));
}

TEST(ObjectClip, WarnsOnHeavyOverlap) {
  std::vector<std::string> warnings;
  const auto prev = log::set_warning_sink([&](const std::string& s) { warnings.push_back(s); });
  const MaskSet masks{2, 1, {{1, 1}, {1, 0}}};
  const std::vector<FeatureMap> f{FeatureMap::constant(2, 1, {1.0}), FeatureMap::constant(2, 1, {1.0})};
  const auto out = aggregate_object_clip(masks, f, 1);
  log::set_warning_sink(prev);
  EXPECT_EQ(out.data, (std::vector<double>{2, 1}));
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_DOUBLE_EQ(mask_overlap_fraction(masks), 0.5);
}

TEST(Tokenize, PoolsPatchesIncludingEdges) {
  FeatureMap m = FeatureMap::zeros(3, 1, 1);
  m.data = {1, 3, 8};
  EXPECT_EQ(tokenize(m, 2), Tensor::from_rows({{2.0}, {8.0}}));
  EXPECT_THROW(tokenize(m, 0), ContractError);
}

TEST(ClipCrossAttention, MatchesOracleAndChecksShapes) {
  const Tensor a = Tensor::from_rows({{0.1, 0.2}, {0.3, -0.4}}), b = Tensor::from_rows({{1, 0}, {0, 1}});
  const auto got = clip_cross_attention(ad::Var::constant(a), ad::Var::constant(b)).value();
  EXPECT_EQ(got, oracle::to_tensor(oracle::clip_cross_attention(oracle::to_mat(a), oracle::to_mat(b))));
  EXPECT_THROW(clip_cross_attention(ad::Var::constant(a), ad::Var::constant(Tensor::from_rows({{1, 0}}))),
               ShapeError);
}

TEST(Loss, ZeroResidualLeavesConfidenceTerm) {
  const PointMap gt = simple_map();
  LossConfig cfg;
  cfg.alpha = 0.5;
  auto pred = PointPrediction::constant(gt);
  EXPECT_NEAR(loss_i2p(pred, gt, cfg).value().item(), 0.0, 1e-15);
  PointMap doubled = gt;
  for (auto& c : doubled.confidence) c = 2.0;
  // Mean-norm scaling makes the loss invariant to a global scale of the prediction.
  PointMap scaled = doubled;
  for (auto& p : scaled.coords) p *= 3.0;
  EXPECT_NEAR(loss_i2p(scaled, gt, cfg), -0.5 * 3 * std::log(2.0), 1e-12);
  EXPECT_GT(loss_l2w(scaled, gt, cfg), 0.0);
}

TEST(Loss, HandComputedResidual) {
  PointMap gt = PointMap::blank(1, 1);
  gt.coords = {Vec3(0, 0, 1)};
  gt.valid = {1};
  PointMap pred = gt;
  pred.coords = {Vec3(3, 4, 1)};
  pred.confidence = {2.0};
  LossConfig cfg;
  cfg.alpha = 1.0;
  EXPECT_NEAR(loss_l2w(pred, gt, cfg), 2.0 * std::sqrt(25.0) - std::log(2.0), 1e-12);
  cfg.scale_mode = ScaleMode::external;
  cfg.pred_scale = 2.0;
  cfg.gt_scale = 1.0;
  EXPECT_NEAR(loss_i2p(pred, gt, cfg), 2.0 * (Vec3(1.5, 2, 0.5) - Vec3(0, 0, 1)).norm() - std::log(2.0), 1e-12);
  cfg.scale_world_loss = true;
  EXPECT_NEAR(loss_l2w(pred, gt, cfg), loss_i2p(pred, gt, cfg), 1e-15);
}

TEST(Loss, WindowSumsFrames) {
  const PointMap gt = simple_map();
  PointMap pred = gt;
  pred.coords[0] = Vec3(0.5, 0, 1);
  LossConfig cfg;
  const std::vector<PointPrediction> p{PointPrediction::constant(pred), PointPrediction::constant(pred)};
  const std::vector<PointMap> g{gt, gt};
  EXPECT_NEAR(loss_l2w(p, g, cfg).value().item(), 2 * loss_l2w(pred, gt, cfg), 1e-14);
}

TEST(Loss, ContractViolations) {
  const PointMap gt = simple_map();
  auto pred = PointPrediction::constant(gt);
  LossConfig cfg;
  cfg.alpha = -1.0;
  EXPECT_THROW(loss_i2p(pred, gt, cfg), ContractError);
  cfg.alpha = 0.0;
  pred.confidence = ad::Var::constant(Tensor({4, 1}, {1, 0, 1, 1}));
  EXPECT_THROW(loss_i2p(pred, gt, cfg), DomainError);
  PointMap none = gt;
  none.valid = {0, 0, 0, 0};
  EXPECT_THROW(loss_l2w(PointPrediction::constant(gt), none, cfg), ContractError);
  EXPECT_THROW(compute_scale(none), ContractError);
}

TEST(Loss, OclipIsMeanAbsoluteDifference) {
  FeatureMap a = FeatureMap::zeros(2, 1, 2), b = FeatureMap::zeros(2, 1, 2);
  a.data = {1, 2, 3, 4};
  b.data = {0, 2, 5, 4};
  EXPECT_DOUBLE_EQ(loss_oclip(a, b), 0.75);
}

}  // namespace
}  // namespace ov3r
