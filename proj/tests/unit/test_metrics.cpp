#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "ov3r/errors.hpp"
#include "ov3r/metrics.hpp"

namespace ov3r {
namespace {

TEST(AccComp, HandExample) {
  const std::vector<Vec3> pred{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  const std::vector<Vec3> gt{Vec3(0, 0, 0.01), Vec3(0, 0, 0.03)};
  const auto r = accuracy_completion(pred, gt);
  EXPECT_NEAR(r.accuracy_cm, (0.01 + std::sqrt(1.0 + 1e-4)) / 2 * 100.0, 1e-9);
  EXPECT_NEAR(r.completion_cm, 2.0, 1e-12);
  const auto capped = accuracy_completion(pred, gt, 0.1);
  EXPECT_NEAR(capped.accuracy_cm, (1.0 + 10.0) / 2, 1e-12);
  EXPECT_THROW(accuracy_completion({}, gt), ContractError);
}

TEST(Ate, AlignmentModes) {
  EXPECT_EQ(parse_alignment("se3"), Alignment::se3);
  EXPECT_EQ(to_string(Alignment::none), "none");
  EXPECT_THROW(parse_alignment("affine"), ContractError);

  std::mt19937_64 rng(2);
  Trajectory gt;
  for (std::uint32_t i = 0; i < 6; ++i) gt.push_back({i, Pose(random_rotation(rng), Vec3(i, i * i * 0.1, 1.0))});
  Trajectory shifted = gt;
  for (auto& e : shifted) e.pose.translation += Vec3(1, 0, 0);
  EXPECT_NEAR(ate_rmse(shifted, gt, Alignment::none).rmse_cm, 100.0, 1e-9);
  EXPECT_LT(ate_rmse(shifted, gt, Alignment::se3).rmse_cm, 1e-9);
  Trajectory scaled = gt;
  for (auto& e : scaled) e.pose.translation *= 2.0;
  EXPECT_GT(ate_rmse(scaled, gt, Alignment::se3).rmse_cm, 1.0);
  EXPECT_LT(ate_rmse(scaled, gt, Alignment::sim3).rmse_cm, 1e-9);
}

TEST(Ate, Contracts) {
  Trajectory a{{0, Pose()}, {1, Pose()}}, b{{0, Pose()}, {2, Pose()}};
  EXPECT_THROW(ate_rmse(a, b, Alignment::none), ContractError);
  EXPECT_THROW(ate_rmse(a, a, Alignment::sim3), ContractError);
  Trajectory unordered{{1, Pose()}, {0, Pose()}};
  EXPECT_THROW(ate_rmse(unordered, unordered, Alignment::none), ContractError);
}

TEST(Semantic, HandExampleSkipsUnlabeledAndAbsent) {
  const std::vector<std::uint32_t> pred{0, 0, 1, 1, 2, 0};
  const std::vector<std::uint32_t> gt{0, 1, 1, 1, kUnlabeled, 0};
  const std::vector<std::uint32_t> subset{0, 1, 2};
  const auto s = miou_macc(pred, gt, subset);
  // class 0: tp 2, fp 1, fn 0; class 1: tp 2, fp 0, fn 1; class 2 absent.
  EXPECT_NEAR(s.per_class[0].iou, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.per_class[1].iou, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.per_class[1].acc, 2.0 / 3.0, 1e-15);
  EXPECT_FALSE(s.per_class[2].present);
  EXPECT_NEAR(s.miou, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.macc, (1.0 + 2.0 / 3.0) / 2, 1e-15);
  EXPECT_EQ(s.evaluated_points, 5u);
}

TEST(Semantic, Contracts) {
  const std::vector<std::uint32_t> a{0, 1}, b{0};
  const std::vector<std::uint32_t> subset{0};
  EXPECT_THROW(miou_macc(a, b, subset), ContractError);
  EXPECT_THROW(miou_macc(a, a, std::vector<std::uint32_t>{}), ContractError);
  EXPECT_THROW(miou_macc(a, a, std::vector<std::uint32_t>{5}), ContractError);
}

TEST(Semantic, CloudForm) {
  LabeledCloud gt{{Vec3(0, 0, 0), Vec3(1, 0, 0)}, {0, 1}, {"a", "b"}};
  LabeledCloud pred = gt;
  pred.labels = {0, 0};
  const auto s = miou_macc(pred, gt);
  EXPECT_NEAR(s.miou, 0.25, 1e-15);
  pred.points[1] = Vec3(2, 0, 0);
  EXPECT_THROW(miou_macc(pred, gt), ContractError);
  gt.labels[0] = 7;
  EXPECT_THROW(gt.validate(), ContractError);
}

TEST(Semantic, FrequencyWeighted) {
  const std::vector<double> iou{1.0, 0.5}, acc{1.0, 0.0}, freq{0.25, 0.75};
  const auto f = f_weighted(iou, acc, freq);
  EXPECT_DOUBLE_EQ(f.f_miou, 0.625);
  EXPECT_DOUBLE_EQ(f.f_macc, 0.25);
  EXPECT_THROW(f_weighted(iou, acc, std::vector<double>{0.5, 0.6}), ContractError);

  const std::vector<std::uint32_t> gt{0, 1, 1, 1}, pred{0, 1, 1, 0};
  const std::vector<std::uint32_t> subset{0, 1};
  const auto w = f_weighted(miou_macc(pred, gt, subset));
  EXPECT_NEAR(w.f_miou, 0.25 * 0.5 + 0.75 * (2.0 / 3.0), 1e-15);
}

}  // namespace
}  // namespace ov3r
