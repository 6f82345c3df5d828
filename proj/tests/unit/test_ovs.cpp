#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "ov3r/errors.hpp"
#include "ov3r/ovs.hpp"
#include "ov3r/synthetic.hpp"

namespace ov3r {
namespace {

LevelInputs levels(const FusionConfig& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  auto t = [&](std::size_t r, std::size_t d) {
    std::vector<double> v(r * d);
    for (auto& x : v) x = g(rng);
    return Tensor({r, d}, v);
  };
  return {t(3, c.clip_dim), t(2, c.clip_dim), t(2, c.clip_dim), t(3, c.dino_dim), t(2, c.dino_dim), t(1, c.point_dim)};
}

TEST(Fusion, DescriptorIsUnitAndWeightsSumToOne) {
  FusionConfig c;
  const FusionModel m(c);
  const auto out = m.forward(levels(c, 1));
  double n = 0.0;
  for (double v : out.descriptor.value().vec()) n += v * v;
  EXPECT_NEAR(n, 1.0, 1e-12);
  const Tensor& w = out.weights.value();
  ASSERT_EQ(w.dims(), (Dims{3, c.clip_dim}));
  for (std::size_t j = 0; j < w.cols(); ++j) EXPECT_NEAR(w(0, j) + w(1, j) + w(2, j), 1.0, 1e-12);
}

TEST(Fusion, ScalarWeightsShareOneValuePerLevel) {
  FusionConfig c;
  c.scalar_weights = true;
  const auto w = FusionModel(c).forward(levels(c, 2)).weights.value();
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t j = 1; j < w.cols(); ++j) EXPECT_DOUBLE_EQ(w(l, j), w(l, 0));
}

TEST(Fusion, MatchesOracleAcrossConfigurations) {
  for (int mask = 0; mask < 16; ++mask) {
    FusionConfig c;
    c.use_dino = mask & 1;
    c.use_point = mask & 2;
    c.scalar_weights = mask & 4;
    c.attention_projections = mask & 8;
    c.seed = static_cast<std::uint64_t>(mask);
    const FusionModel m(c);
    const auto in = levels(c, 10 + static_cast<std::uint64_t>(mask));
    const auto got = m.describe(in);
    const auto want = oracle::fuse(m, in).descriptor;
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12) << "config " << mask;
  }
}

TEST(Fusion, ShapeChecks) {
  FusionConfig c;
  const FusionModel m(c);
  auto in = levels(c, 3);
  in.dino_full = Tensor::zeros({3, c.dino_dim + 1});
  EXPECT_THROW(m.forward(in), ShapeError);
  EXPECT_THROW(m.param("nope"), ContractError);
}

TEST(Fusion, CloneIsIndependent) {
  FusionModel a{FusionConfig{}};
  FusionModel b = a.clone();
  b.param("k").assign(Tensor::scalar(3.0));
  EXPECT_EQ(a.param("k").value().item(), 10.0);
  EXPECT_EQ(a.param("b").value().item(), 0.0);
}

TEST(SimLoss, MatchesLogForm) {
  const Tensor desc = normalize_rows(Tensor::from_rows({{1, 2, 0}, {0, 1, 1}, {3, 0, 1}}));
  const Tensor text = normalize_rows(Tensor::from_rows({{1, 0, 0}, {0, 1, 0}}));
  const std::vector<std::uint32_t> labels{0, 1, 0};
  const double got = sim_loss(ad::Var::constant(desc), labels, text, ad::Var::constant(Tensor::scalar(4.0)),
                              ad::Var::constant(Tensor::scalar(0.3)))
                         .value()
                         .item();
  EXPECT_NEAR(got, oracle::sim_loss(oracle::to_mat(desc), labels, oracle::to_mat(text), 4.0, 0.3), 1e-13);
}

TEST(SimLoss, Contracts) {
  const Tensor text = Tensor::from_rows({{1, 0}});
  const auto k = ad::Var::constant(Tensor::scalar(1.0)), b = ad::Var::constant(Tensor::scalar(0.0));
  const std::vector<std::uint32_t> one{0};
  EXPECT_THROW(sim_loss(ad::Var::constant(Tensor::from_rows({{1, 0}})), one, text, k, b), ContractError);
  const std::vector<std::uint32_t> two{0, 0};
  EXPECT_THROW(sim_loss(ad::Var::constant(Tensor::from_rows({{1, 0, 0}, {1, 0, 0}})), two, text, k, b), ShapeError);
  EXPECT_NEAR(sim_pair_loss(-1000.0, 1, 1.0, 0.0), 1000.0, 1e-9);
}

TEST(Classify, TiesGoToLowestIndex) {
  const Tensor text = Tensor::from_rows({{0, 1}, {1, 0}, {1, 0}});
  const std::vector<double> d{1.0, 0.0};
  EXPECT_EQ(classify(d, text).index, 1u);
}

TEST(Aggregate, RunningWeightedMean) {
  Segment3D s;
  aggregate_segment_descriptor(s, std::vector<double>{1.0, 0.0}, 3.0);
  aggregate_segment_descriptor(s, std::vector<double>{0.0, 1.0}, 1.0);
  EXPECT_NEAR(s.descriptor[0], 3.0 / std::sqrt(10.0), 1e-12);
  EXPECT_NEAR(s.descriptor[1], 1.0 / std::sqrt(10.0), 1e-12);
  EXPECT_DOUBLE_EQ(s.total_weight, 4.0);
  EXPECT_THROW(aggregate_segment_descriptor(s, std::vector<double>{1.0, 0.0}, 0.0), ContractError);
  EXPECT_THROW(aggregate_segment_descriptor(s, std::vector<double>{1.0}, 1.0), ShapeError);
}

TEST(Training, LossDecreasesAndContractsHold) {
  synth::SeparableConfig sc;
  sc.samples = 60;
  const auto data = synth::separable_dataset(sc);
  FusionConfig fc;
  fc.dino_dim = sc.dino_dim;
  fc.point_dim = sc.point_dim;
  TrainConfig tc;
  tc.epochs = 20;
  tc.batch_size = 16;
  const auto r = train_fusion(data, FusionModel(fc), tc);
  ASSERT_EQ(r.loss_trace.size(), 20u);
  EXPECT_LT(r.loss_trace.back(), r.loss_trace.front());

  auto one_class = data;
  for (auto& l : one_class.labels) l = 0;
  EXPECT_THROW(train_fusion(one_class, FusionModel(fc), tc), ContractError);
  tc.batch_size = 1;
  EXPECT_THROW(train_fusion(data, FusionModel(fc), tc), ContractError);
}

TEST(Training, Deterministic) {
  synth::SeparableConfig sc;
  sc.samples = 30;
  const auto data = synth::separable_dataset(sc);
  FusionConfig fc;
  fc.dino_dim = sc.dino_dim;
  fc.point_dim = sc.point_dim;
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 8;
  EXPECT_EQ(train_fusion(data, FusionModel(fc), tc).loss_trace, train_fusion(data, FusionModel(fc), tc).loss_trace);
}

TEST(Crops, BoundingBoxAndMaskedPixels) {
  Image img = Image::blank(4, 3);
  for (auto& v : img.data) v = 1.0;
  PointMap pm = PointMap::blank(4, 3);
  Mask m(12, 0);
  m[pm.index(1, 1)] = 1;
  m[pm.index(2, 2)] = 1;
  pm.valid[pm.index(1, 1)] = 1;
  pm.coords[pm.index(1, 1)] = Vec3(1, 2, 3);
  const Crops c = make_crops(img, m, pm);
  EXPECT_EQ(c.x0, 1u);
  EXPECT_EQ(c.y0, 1u);
  EXPECT_EQ(c.seg.width, 2u);
  EXPECT_EQ(c.seg.height, 2u);
  EXPECT_EQ(c.oseg.at(1, 0, 0), 0.0);
  EXPECT_EQ(c.oseg.at(0, 0, 0), 1.0);
  ASSERT_EQ(c.points.size(), 1u);
  EXPECT_THROW(make_crops(img, Mask(12, 0), pm), ContractError);
  EXPECT_THROW(make_crops(img, Mask(5, 1), pm), ShapeError);
}

class Matching : public ::testing::Test {
 protected:
  synth::Scene scene = synth::make_two_boxes(5);
};

TEST_F(Matching, MergesAcrossViews) {
  const SceneState state = synth::oracle_state(scene);
  std::map<std::uint32_t, MaskSet> masks;
  for (const auto& v : scene.views) masks[v.id] = synth::object_masks(v);
  const auto t = match_segments(state, masks);
  ASSERT_EQ(t.segments.size(), 2u);
  for (const auto& s : t.segments) EXPECT_EQ(s.observations.size(), 5u);
  EXPECT_EQ(t.point_segment.size(), state.world_points.size());
}

TEST_F(Matching, HighThresholdSplits) {
  const SceneState state = synth::oracle_state(scene);
  std::map<std::uint32_t, MaskSet> masks;
  for (const auto& v : scene.views) masks[v.id] = synth::object_masks(v);
  MatchOptions o;
  o.iou_threshold = 1.0;
  EXPECT_EQ(match_segments(state, masks, o).segments.size(), 10u);
}

TEST_F(Matching, Contracts) {
  const SceneState state = synth::oracle_state(scene, {0, 1});
  std::map<std::uint32_t, MaskSet> masks;
  masks[3] = synth::object_masks(scene.views[3]);
  EXPECT_THROW(match_segments(state, masks), ContractError);
  SceneState no_k = state;
  no_k.keyframes[1].intrinsics.reset();
  masks.clear();
  masks[0] = synth::object_masks(scene.views[0]);
  EXPECT_NO_THROW(match_segments(no_k, masks));
  masks[1] = synth::object_masks(scene.views[1]);
  EXPECT_THROW(match_segments(no_k, masks), ContractError);
  masks.erase(1);
  masks[0].masks[0].pop_back();
  EXPECT_THROW(match_segments(state, masks), ShapeError);
}

TEST_F(Matching, OverlapGoesToLowestMask) {
  const SceneState state = synth::oracle_state(scene, {0});
  MaskSet all = synth::object_masks(scene.views[0]);
  Mask full(all.width * all.height, 1);
  all.masks.insert(all.masks.begin(), full);
  std::map<std::uint32_t, MaskSet> masks{{0, all}};
  const auto t = match_segments(state, masks);
  ASSERT_EQ(t.segments.size(), 1u);
  EXPECT_EQ(t.segments[0].points.size(), state.world_points.size());
}

}  // namespace
}  // namespace ov3r
