#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ov3r/autodiff.hpp"
#include "ov3r/fusion_ops.hpp"
#include "ov3r/optim.hpp"
#include "ov3r/pipeline.hpp"
#include "ov3r/tensor.hpp"

namespace ov3r {

// ---------------------------------------------------------------------------
// Segments

struct Observation {
  std::uint32_t keyframe = 0;
  std::uint32_t mask = 0;
  std::size_t points = 0;  // scene points the mask claimed in this view
};

struct Segment3D {
  std::uint32_t id = 0;
  std::vector<std::size_t> points;  // indices into SceneState::world_points
  std::vector<Observation> observations;
  std::vector<double> descriptor;    // unit norm once any view was aggregated
  std::vector<double> weighted_sum;  // unnormalised running sum of w * d
  double total_weight = 0.0;
  std::optional<std::uint32_t> label;
};

struct MatchOptions {
  double iou_threshold = 0.5;
  /// A projected segment point counts as visible when its depth is within
  /// this fraction of the keyframe's own depth at that pixel.
  double depth_tolerance = 0.05;
};

struct SegmentTable {
  std::vector<Segment3D> segments;
  std::vector<std::int64_t> point_segment;  // per scene point, -1 when no mask claimed it
};

/// Keyframes are visited in registration order. Each mask claims the scene
/// points at its valid pixels (overlaps go to the lowest mask index) and
/// merges into the existing segment whose visible projection overlaps it with
/// the highest IoU above the threshold, or else starts a new segment. Masks
/// that claim no point are skipped. Throws ContractError for masks on a frame
/// that is not a registered keyframe or a keyframe without intrinsics, and
/// ShapeError when mask and pointmap sizes differ.
SegmentTable match_segments(const SceneState& state, const std::map<std::uint32_t, MaskSet>& masks,
                            const MatchOptions& options = {});

// ---------------------------------------------------------------------------
// Level inputs

/// H x W x C image, values in [0, 1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<double> data;  // (y * width + x) * channels + c

  static Image blank(std::size_t width, std::size_t height, std::size_t channels = 3);
  double& at(std::size_t x, std::size_t y, std::size_t c) { return data[(y * width + x) * channels + c]; }
  double at(std::size_t x, std::size_t y, std::size_t c) const { return data[(y * width + x) * channels + c]; }
  void validate() const;
  friend bool operator==(const Image&, const Image&) = default;
};

class FeatureProviders {
 public:
  virtual ~FeatureProviders() = default;
  virtual Tensor clip(const Image& image) = 0;               // T x D
  virtual Tensor dino(const Image& image) = 0;               // T x D_dino
  virtual Tensor point(std::span<const Vec3> points) = 0;    // T_p x D_point
};

struct LevelInputs {
  Tensor clip_full;
  Tensor clip_seg;
  Tensor clip_oseg;
  Tensor dino_full;
  Tensor dino_seg;
  Tensor point;
  friend bool operator==(const LevelInputs&, const LevelInputs&) = default;
};

struct Crops {
  Image seg;   // bounding box of the mask
  Image oseg;  // same box with pixels outside the mask zeroed
  std::vector<Vec3> points;  // valid pointmap coordinates under the mask
  std::size_t x0 = 0, y0 = 0;
};

/// Throws ContractError for an empty mask, ShapeError on size mismatch.
Crops make_crops(const Image& frame, const Mask& mask, const PointMap& pointmap);

LevelInputs build_levels(const Image& frame, const Mask& mask, const PointMap& pointmap, FeatureProviders& providers);

// ---------------------------------------------------------------------------
// Fusion model

struct FusionConfig {
  std::size_t clip_dim = 16;
  std::size_t dino_dim = 16;
  std::size_t point_dim = 8;
  bool use_dino = true;            // off: d_full/d_seg = CLIP + attention(CLIP over CLIP)
  bool use_point = true;           // off: d_oseg = pooled F_clip^os
  bool scalar_weights = false;     // one weight per level instead of per channel
  bool attention_projections = true;
  double init_k = 10.0;
  double init_b = 0.0;
  double init_scale = 0.1;
  std::uint64_t seed = 0;
};

struct FusedDescriptor {
  ad::Var descriptor;  // 1 x D, unit norm
  ad::Var d_full;
  ad::Var d_seg;
  ad::Var d_oseg;
  ad::Var weights;     // 3 x D (rows: full, seg, oseg); columns sum to one
};

class FusionModel {
 public:
  FusionModel() : FusionModel(FusionConfig{}) {}
  explicit FusionModel(const FusionConfig& config);

  const FusionConfig& config() const noexcept { return config_; }

  /// Named parameters in a fixed order. Parameters that the configuration
  /// leaves unused are still present.
  const std::vector<std::pair<std::string, ad::Var>>& named_parameters() const noexcept { return params_; }
  std::vector<ad::Var> parameters() const;
  ad::Var& param(const std::string& name);
  const ad::Var& param(const std::string& name) const;

  /// Deep copy with independent parameter storage.
  FusionModel clone() const;

  /// Throws ShapeError when level widths disagree with the configuration.
  FusedDescriptor forward(const LevelInputs& in) const;
  std::vector<double> describe(const LevelInputs& in) const;

  ad::Var d_full_seg(const ad::Var& clip, const ad::Var& dino) const;
  ad::Var d_oseg(const ad::Var& clip_oseg, const ad::Var& point) const;
  ad::Var level_weights(const ad::Var& levels) const;  // 3 x D -> 3 x D

 private:
  ad::AttentionProjections projections(const std::string& prefix) const;

  FusionConfig config_;
  std::vector<std::pair<std::string, ad::Var>> params_;
};

// ---------------------------------------------------------------------------
// Similarity loss, training, inference

/// -log sigmoid(z (k dot - b)) for one (descriptor, text) pair.
double sim_pair_loss(double dot, int z, double k, double b);

/// Sigmoid similarity loss over a batch: descriptors B x D and text embeddings C x D,
/// both unit-normalised; z = +1 where labels[i] == j and -1 otherwise.
/// Throws ContractError for B < 2 and ShapeError on width mismatch.
ad::Var sim_loss(const ad::Var& descriptors, std::span<const std::uint32_t> labels, const Tensor& text,
                 const ad::Var& k, const ad::Var& b);

struct OvsDataset {
  std::vector<LevelInputs> inputs;
  std::vector<std::uint32_t> labels;
  Tensor text;  // C x D, unit rows
  std::vector<std::string> classes;

  /// Throws ShapeError/ContractError on inconsistent sizes or labels.
  void validate() const;
  std::size_t class_count_present() const;
};

struct TrainConfig {
  std::size_t epochs = 15;
  std::size_t batch_size = 512;
  OptimizerConfig optimizer{};
  std::uint64_t seed = 0;
};

struct TrainResult {
  FusionModel model;
  std::vector<double> loss_trace;  // mean batch loss per epoch
};

/// Mini-batch descent on sim_loss. The final batch of an epoch joins the
/// previous one when it would hold a single sample. Throws ContractError when
/// fewer than two classes occur in the dataset.
TrainResult train_fusion(const OvsDataset& data, const FusionModel& init, const TrainConfig& cfg);

struct Classification {
  std::uint32_t index = 0;
  std::vector<double> scores;
};

/// Argmax of cosine similarity, ties to the lowest index. Throws ContractError
/// for an empty text set.
Classification classify(std::span<const double> d, const Tensor& text);

double accuracy(const FusionModel& model, const OvsDataset& data);

/// Running visibility-weighted mean; throws ContractError for weight <= 0 and
/// ShapeError when widths differ.
void aggregate_segment_descriptor(Segment3D& seg, std::span<const double> view_descriptor, double weight);

Tensor normalize_rows(const Tensor& t);

}  // namespace ov3r
