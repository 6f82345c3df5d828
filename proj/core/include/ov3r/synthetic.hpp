#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ov3r/geometry.hpp"
#include "ov3r/ovs.hpp"
#include "ov3r/pipeline.hpp"

// Procedural scenes with exact ground truth, used by tests, benchmarks and
// the `synth-room` command.
namespace ov3r::synth {

struct Box {
  Vec3 lo;
  Vec3 hi;
  std::uint32_t object = 0;
};

struct View {
  std::uint32_t id = 0;
  Pose camera_to_world;
  Intrinsics intrinsics;
  PointMap world_map;                 // invalid where the ray hits nothing
  std::vector<std::uint32_t> object;  // per pixel, kUnlabeled on a miss
  Image image;                        // flat per-object colours
};

struct Scene {
  std::vector<std::string> classes;
  std::vector<std::uint32_t> object_class;
  std::vector<std::array<double, 3>> object_color;
  std::vector<View> views;
};

struct RoomConfig {
  std::size_t frames = 48;
  std::size_t width = 64;
  std::size_t height = 48;
  double focal = 50.0;
  double radius = 1.6;         // camera circle around the room centre
  double camera_height = 1.3;
  double sweep = 6.283185307179586;  // radians covered by the camera path
  std::uint64_t seed = 0;
};

/// Closed 5 x 4 x 2.6 m room (floor, four walls, ceiling) with four
/// furniture boxes near the centre, viewed from a circle looking inwards.
Scene make_room(const RoomConfig& cfg);

/// Two floating boxes seen by `views` cameras on an arc; nothing else in view.
Scene make_two_boxes(std::size_t views = 5, std::size_t width = 64, std::size_t height = 48, double focal = 80.0);

/// Renders one view of axis-aligned boxes. `room` (if any) is hit from inside.
View render(const std::vector<Box>& boxes, const Box* room, const std::vector<std::array<double, 3>>& colors,
            std::uint32_t id, const Pose& camera_to_world, const Intrinsics& k);

/// Camera at `eye` looking at `target` with world +z up (camera x right, y down, z forward).
Pose look_at(const Vec3& eye, const Vec3& target);

std::array<double, 3> object_color(std::uint32_t object);

/// One mask per object visible in the view, ordered by object id.
MaskSet object_masks(const View& view, std::vector<std::uint32_t>* objects = nullptr);

/// Per-pixel class labels of a view (kUnlabeled on a miss).
std::vector<std::uint32_t> pixel_classes(const Scene& scene, const View& view);

/// Unit-norm random text embeddings, one row per class.
Tensor text_embeddings(std::size_t classes, std::size_t dim, std::uint64_t seed);

/// Deterministic stand-ins for the CLIP, DINO and point encoders. CLIP tokens
/// live on a 2 x 2 grid (fewer for tiny crops); each token is the
/// pixel-share-weighted sum of the class text embeddings plus hashed noise.
/// DINO tokens are a fixed random projection of the cell's mean colour. The
/// point encoder emits one token of shape statistics.
class Providers : public FeatureProviders {
 public:
  Providers(const Scene& scene, Tensor text, std::size_t dino_dim, std::size_t point_dim, double noise,
            std::uint64_t seed);

  Tensor clip(const Image& image) override;
  Tensor dino(const Image& image) override;
  Tensor point(std::span<const Vec3> points) override;

  const Tensor& text() const noexcept { return text_; }

 private:
  std::map<std::array<double, 3>, std::uint32_t> color_class_;
  Tensor text_;
  std::size_t dino_dim_;
  std::size_t point_dim_;
  double noise_;
  std::uint64_t seed_;
  Tensor dino_proj_;
};

std::vector<FrameInfo> frame_infos(const Scene& scene);

/// Scene state with every listed view (all when empty) registered as a
/// keyframe at its exact ground-truth pose and pointmap.
SceneState oracle_state(const Scene& scene, const std::vector<std::uint32_t>& views = {});

/// Ground truth for the oracle predictor; CLIP tokens of each full frame
/// serve as retrieval features when `providers` is given.
std::vector<GroundTruthFrame> ground_truth(const Scene& scene, Providers* providers = nullptr);

/// Level inputs for every object mask of every view in `views` (all views
/// when empty), labelled with the object's class.
OvsDataset view_dataset(const Scene& scene, Providers& providers, const std::vector<std::uint32_t>& views = {});

struct SeparableConfig {
  std::size_t classes = 3;
  std::size_t dim = 16;
  std::size_t samples = 300;
  std::size_t tokens = 4;
  std::size_t dino_dim = 8;
  std::size_t point_dim = 8;
  double noise = 0.3;
  std::uint64_t seed = 0;
};

/// Classes drawn round-robin; every level carries a class-dependent mean plus
/// Gaussian noise, so the classes are linearly separable with high margin.
OvsDataset separable_dataset(const SeparableConfig& cfg);

}  // namespace ov3r::synth
