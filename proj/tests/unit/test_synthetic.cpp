#include <gtest/gtest.h>

#include <set>

#include "ov3r/metrics.hpp"
#include "ov3r/synthetic.hpp"

namespace ov3r {
namespace {

TEST(Synthetic, RoomViewsAreConsistentWithProjection) {
  synth::RoomConfig rc;
  rc.frames = 6;
  const auto scene = synth::make_room(rc);
  ASSERT_EQ(scene.views.size(), 6u);
  for (const auto& v : scene.views) {
    EXPECT_EQ(v.world_map.frame, FrameKind::world);
    const Pose w2c = v.camera_to_world.inverse();
    std::size_t valid = 0;
    for (std::size_t p = 0; p < v.world_map.pixel_count(); ++p) {
      if (!v.world_map.valid[p]) continue;
      ++valid;
      const Vec3 c = w2c.apply(v.world_map.coords[p]);
      ASSERT_GT(c.z(), 0.0);
      const auto& k = v.intrinsics;
      EXPECT_NEAR(k.fx * c.x() / c.z() + k.cx, static_cast<double>(p % v.world_map.width), 1e-6);
      EXPECT_NEAR(k.fy * c.y() / c.z() + k.cy, static_cast<double>(p / v.world_map.width), 1e-6);
    }
    // The room is closed, so every ray hits something.
    EXPECT_EQ(valid, v.world_map.pixel_count());
  }
}

TEST(Synthetic, RoomShowsAllClasses) {
  const auto scene = synth::make_room(synth::RoomConfig{});
  std::set<std::uint32_t> seen;
  for (const auto& v : scene.views)
    for (auto c : synth::pixel_classes(scene, v)) seen.insert(c);
  // The cameras look down at the furniture; the ceiling stays out of frame.
  const std::set<std::uint32_t> expected{0, 1, 3, 4, 5, 6};
  EXPECT_EQ(seen, expected);
  EXPECT_EQ(scene.classes[2], "ceiling");
}

TEST(Synthetic, TwoBoxesHaveBackground) {
  const auto scene = synth::make_two_boxes();
  for (const auto& v : scene.views) {
    std::vector<std::uint32_t> objects;
    const auto masks = synth::object_masks(v, &objects);
    EXPECT_EQ(objects, (std::vector<std::uint32_t>{0, 1}));
    EXPECT_LT(v.world_map.count_valid(), v.world_map.pixel_count());
    for (std::size_t p = 0; p < v.object.size(); ++p) EXPECT_EQ(v.world_map.valid[p] != 0, v.object[p] != kUnlabeled);
    EXPECT_NO_THROW(masks.validate());
  }
}

TEST(Synthetic, DeterministicGivenSeed) {
  synth::RoomConfig rc;
  rc.frames = 3;
  rc.seed = 4;
  const auto a = synth::make_room(rc), b = synth::make_room(rc);
  EXPECT_EQ(a.views[1].world_map.coords, b.views[1].world_map.coords);
  EXPECT_EQ(a.views[1].image, b.views[1].image);
  EXPECT_EQ(synth::text_embeddings(4, 8, 1), synth::text_embeddings(4, 8, 1));
}

TEST(Synthetic, ProvidersShapes) {
  const auto scene = synth::make_two_boxes();
  synth::Providers p(scene, synth::text_embeddings(scene.classes.size(), 16, 2), 8, 6, 0.05, 3);
  const auto& v = scene.views[0];
  EXPECT_EQ(p.clip(v.image).dims(), (Dims{4, 16}));
  EXPECT_EQ(p.dino(v.image).dims(), (Dims{4, 8}));
  EXPECT_EQ(p.point(v.world_map.valid_points()).dims(), (Dims{1, 6}));
  EXPECT_EQ(p.clip(Image::blank(1, 1)).rows(), 1u);
  const auto data = synth::view_dataset(scene, p);
  EXPECT_EQ(data.inputs.size(), 2 * scene.views.size());
  EXPECT_NO_THROW(data.validate());
}

TEST(Synthetic, SeparableDatasetBalanced) {
  synth::SeparableConfig c;
  const auto d = synth::separable_dataset(c);
  EXPECT_EQ(d.inputs.size(), 300u);
  EXPECT_EQ(d.class_count_present(), 3u);
  EXPECT_EQ(std::count(d.labels.begin(), d.labels.end(), 0u), 100);
}

}  // namespace
}  // namespace ov3r
