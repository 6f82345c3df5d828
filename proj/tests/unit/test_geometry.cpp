#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "ov3r/errors.hpp"
#include "ov3r/geometry.hpp"

namespace ov3r {
namespace {

std::vector<Vec3> random_points(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g;
  std::vector<Vec3> out(n);
  for (auto& p : out) p = Vec3(g(rng), g(rng), g(rng));
  return out;
}

TEST(Pose, RejectsNonRotation) {
  Mat3 r = Mat3::Identity();
  r(0, 0) = -1.0;
  EXPECT_THROW(Pose(r, Vec3::Zero()), DomainError);
  EXPECT_THROW(Sim3(1.0, 2.0 * Mat3::Identity(), Vec3::Zero()), DomainError);
}

TEST(Pose, ComposeAndInverse) {
  std::mt19937_64 rng(3);
  const Pose a(random_rotation(rng), Vec3(1, 2, 3)), b(random_rotation(rng), Vec3(-1, 0, 4));
  const Vec3 x(0.3, -0.2, 0.9);
  EXPECT_LT((a.compose(b).apply(x) - a.apply(b.apply(x))).norm(), 1e-12);
  EXPECT_LT((a.inverse().apply(a.apply(x)) - x).norm(), 1e-12);
}

TEST(Sim3, ComposeAndInverse) {
  std::mt19937_64 rng(4);
  const Sim3 s(2.5, random_rotation(rng), Vec3(0.1, 0.2, 0.3));
  const Vec3 x(1, -1, 2);
  EXPECT_LT((s.inverse().apply(s.apply(x)) - x).norm(), 1e-12);
  EXPECT_LT((s.compose(s).apply(x) - s.apply(s.apply(x))).norm(), 1e-12);
}

TEST(Projection, RoundTripsThroughUnproject) {
  const Intrinsics k{100, 110, 31.5, 23.5, 64, 48};
  std::mt19937_64 rng(5);
  const Pose w2c(random_rotation(rng), Vec3(0.1, 0.2, 0.3));
  const Vec2 px(10.25, 40.5);
  const Vec3 world = w2c.inverse().apply(unproject(px, 3.0, k));
  const auto back = project(world, k, w2c);
  ASSERT_TRUE(back.has_value());
  EXPECT_LT((*back - px).norm(), 1e-10);
}

TEST(Projection, BehindCameraOrOutsideIsEmpty) {
  const Intrinsics k{100, 100, 31.5, 23.5, 64, 48};
  EXPECT_FALSE(project(Vec3(0, 0, -1), k, Pose()).has_value());
  EXPECT_FALSE(project(Vec3(10, 0, 1), k, Pose()).has_value());
}

TEST(Intrinsics, Validate) {
  EXPECT_THROW((Intrinsics{0, 1, 0, 0, 4, 4}).validate(), ContractError);
  EXPECT_THROW((Intrinsics{1, 1, 9, 0, 4, 4}).validate(), ContractError);
  EXPECT_NO_THROW((Intrinsics{1, 1, 1.5, 1.5, 4, 4}).validate());
}

TEST(Umeyama, RecoversSimilarity) {
  std::mt19937_64 rng(6);
  const Sim3 truth(1.7, random_rotation(rng), Vec3(0.5, -0.3, 2.0));
  const auto src = random_points(rng, 40);
  std::vector<Vec3> dst;
  for (const auto& p : src) dst.push_back(truth.apply(p));
  const Sim3 est = umeyama_align(src, dst, true);
  EXPECT_NEAR(est.scale, 1.7, 1e-12);
  EXPECT_LT(rotation_angle_between(est.rotation, truth.rotation), 1e-10);
  EXPECT_LT((est.translation - truth.translation).norm(), 1e-10);
}

TEST(Umeyama, MatchesHornOracle) {
  std::mt19937_64 rng(7);
  const auto src = random_points(rng, 25), dst = random_points(rng, 25);
  for (bool with_scale : {true, false}) {
    const Sim3 a = umeyama_align(src, dst, with_scale);
    const Sim3 b = oracle::horn_align(src, dst, with_scale);
    EXPECT_NEAR(a.scale, b.scale, 1e-10);
    EXPECT_LT(rotation_angle_between(a.rotation, b.rotation), 1e-8);
    EXPECT_LT((a.translation - b.translation).norm(), 1e-8);
  }
}

TEST(Umeyama, WeightsSelectSubset) {
  std::mt19937_64 rng(8);
  const Sim3 truth(1.0, random_rotation(rng), Vec3(1, 2, 3));
  auto src = random_points(rng, 10);
  std::vector<Vec3> dst;
  for (const auto& p : src) dst.push_back(truth.apply(p));
  dst[9] += Vec3(50, 50, 50);
  std::vector<double> w(10, 1.0);
  w[9] = 0.0;
  const Sim3 est = umeyama_align(src, dst, false, w);
  EXPECT_LT((est.translation - truth.translation).norm(), 1e-10);
}

TEST(Umeyama, DegenerateInputs) {
  const std::vector<Vec3> two{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  EXPECT_THROW(umeyama_align(two, two, true), DegeneracyError);
  const std::vector<Vec3> line{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(3, 0, 0)};
  EXPECT_THROW(umeyama_align(line, line, true), DegeneracyError);
  EXPECT_THROW(umeyama_align(line, two, true), ContractError);
}

TEST(Rotation, FromVectorAngle) {
  const Mat3 r = rotation_from_vector(Vec3(0, 0, 0.3));
  EXPECT_NEAR(rotation_angle_between(r, Mat3::Identity()), 0.3, 1e-12);
  EXPECT_TRUE(is_rotation(r));
}

}  // namespace
}  // namespace ov3r
