#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ov3r/geometry.hpp"
#include "ov3r/pointmap.hpp"
#include "ov3r/reservoir.hpp"
#include "ov3r/tensor.hpp"

namespace ov3r {

struct FrameInfo {
  std::uint32_t id = 0;
  std::optional<Intrinsics> intrinsics;
};

struct WindowConfig {
  std::size_t init_length = 5;
  std::size_t incremental_length = 11;
  /// Keyframe spacing; 0 selects (incremental_length - 1) / 2.
  std::size_t stride = 0;
  std::size_t retrieval_k = 3;
  std::size_t reservoir_capacity = 64;
  std::uint64_t seed = 0;
  /// Recover keyframe poses by PnP-RANSAC on the registered points when
  /// intrinsics are known; otherwise the registration transform is used.
  bool pnp_poses = true;
  std::size_t pnp_max_points = 600;

  /// Throws ContractError unless both lengths are odd and positive.
  void validate() const;
  std::size_t effective_stride() const;
};

/// One predictor call: a window of consecutive frames anchored at its
/// central keyframe.
struct WindowRequest {
  std::vector<std::uint32_t> frames;
  std::size_t keyframe_index = 0;

  std::uint32_t keyframe() const { return frames.at(keyframe_index); }
};

/// Local pointmaps for every frame of a window, expressed in the keyframe's
/// coordinate system, plus optional per-frame feature tokens (T x D) whose
/// mean is used as the retrieval key.
struct WindowPrediction {
  std::vector<PointMap> pointmaps;
  std::vector<Tensor> features;
};

class PointmapPredictor {
 public:
  virtual ~PointmapPredictor() = default;
  virtual WindowPrediction predict(const WindowRequest& request) = 0;
};

/// Windows processed for a stream of n frames: an initial window of
/// init_length, then incremental windows centred every stride frames, plus
/// one final window flush with the end of the stream when needed.
std::vector<WindowRequest> keyframe_schedule(const std::vector<FrameInfo>& frames, const WindowConfig& cfg);

enum class PoseSource { pnp, registration };

struct KeyframeRecord {
  std::uint32_t frame = 0;
  Sim3 local_to_world;
  PointMap world_map;         // keyframe pointmap in world coordinates
  Pose camera_to_world;
  PoseSource pose_source = PoseSource::registration;
  std::optional<Intrinsics> intrinsics;
  std::size_t point_offset = 0;  // first index of this keyframe's points in SceneState::world_points
  std::vector<std::uint32_t> registered_against;
  std::size_t overlap = 0;

  /// Index into SceneState::world_points for each valid pixel, -1 elsewhere.
  std::vector<std::int64_t> pixel_to_point() const;
};

struct SceneState {
  std::vector<Vec3> world_points;
  std::vector<double> confidences;
  std::vector<KeyframeRecord> keyframes;
  Trajectory trajectory;  // camera-to-world, one entry per keyframe
  Reservoir reservoir;
  std::size_t frames_processed = 0;
  double seconds = 0.0;
  std::size_t stride = 0;

  const KeyframeRecord* find_keyframe(std::uint32_t frame) const;
  double frames_per_second() const { return seconds > 0.0 ? static_cast<double>(frames_processed) / seconds : 0.0; }
};

struct Registration {
  Sim3 local_to_world;
  PointMap world_map;
  std::size_t overlap = 0;
  std::vector<std::uint32_t> used_keyframes;
};

/// Keyframes to register a window against: the top retrieval_k reservoir
/// entries by key similarity together with the most recent keyframe.
std::vector<std::uint32_t> correlated_keyframes(const SceneState& state, std::span<const double> query,
                                                std::size_t k);

/// Registers the window's keyframe pointmap into the world frame. With an
/// empty state the keyframe frame becomes the world frame. Otherwise a
/// confidence-weighted similarity is fitted to pixel correspondences between
/// the window's local maps and the stored world maps of the correlated
/// keyframes it contains. Throws RegistrationFailure with fewer than 3.
Registration register_local_to_world(const WindowRequest& request, const WindowPrediction& prediction,
                                     const SceneState& state, std::span<const std::uint32_t> candidates);

/// Runs the incremental reconstruction over the whole stream.
/// Throws ContractError for fewer than init_length frames and PipelineError
/// (carrying the keyframe's frame id) when the predictor fails.
SceneState run_stream(const std::vector<FrameInfo>& frames, PointmapPredictor& predictor, const WindowConfig& cfg);

/// Per-frame ground truth used by the oracle predictor.
struct GroundTruthFrame {
  std::uint32_t id = 0;
  PointMap world_map;     // frame == world
  Pose camera_to_world;
  Tensor features;        // T x D tokens; may be left default for no features
  bool has_features = false;
};

/// Re-expresses ground-truth world maps in the keyframe's camera frame and
/// adds isotropic Gaussian noise. Noise depends only on (seed, keyframe,
/// frame), so any prefix of a stream sees identical predictions.
class OraclePredictor : public PointmapPredictor {
 public:
  OraclePredictor(std::vector<GroundTruthFrame> frames, double noise_sigma, std::uint64_t seed);
  WindowPrediction predict(const WindowRequest& request) override;

  const GroundTruthFrame& frame(std::uint32_t id) const;

 private:
  std::vector<GroundTruthFrame> frames_;
  double sigma_;
  std::uint64_t seed_;
};

std::string to_string(PoseSource s);

}  // namespace ov3r
