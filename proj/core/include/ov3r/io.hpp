#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ov3r/metrics.hpp"
#include "ov3r/ovs.hpp"
#include "ov3r/pipeline.hpp"

namespace ov3r::io {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Scene manifest (JSON). Paths are written relative to the manifest file and
// resolved to absolute paths on load.

inline constexpr const char* kLevels[] = {"clip_full", "clip_seg", "clip_oseg", "dino_full", "dino_seg", "point"};

struct ManifestFrame {
  std::uint32_t id = 0;
  fs::path image;                        // OVTF f64 H x W x 3
  std::optional<Intrinsics> intrinsics;
  std::optional<Pose> pose;              // ground-truth camera-to-world
  std::optional<fs::path> gt_points;     // OVTF f64 H x W x 3, world frame
  std::optional<fs::path> gt_valid;      // OVTF u8 H x W
  std::optional<fs::path> gt_labels;     // OVTF u32 H x W class ids
  std::optional<fs::path> features;      // OVTF f64 T x D retrieval tokens
};

struct FeatureBinding {
  std::uint32_t frame = 0;
  std::uint32_t mask = 0;
  std::string level;
  fs::path path;
};

struct SceneManifest {
  std::vector<ManifestFrame> frames;
  std::vector<FeatureBinding> features;
  std::optional<fs::path> text_embeddings;
  std::vector<std::string> classes;
  WindowConfig window;
  double iou_threshold = 0.5;
  std::optional<std::size_t> feature_dim;

  const ManifestFrame& frame(std::uint32_t id) const;
};

/// Throws IoError for a missing file, FormatError for malformed JSON and
/// ContractError for duplicate ids, unknown levels or dangling paths.
SceneManifest load_manifest(const fs::path& path);
void save_manifest(const fs::path& path, const SceneManifest& m);
/// Runs the load-time checks on an in-memory manifest.
void validate_manifest(const SceneManifest& m);
/// Canonical JSON with absolute paths; equal strings mean equal manifests.
std::string canonical_json(const SceneManifest& m);

std::vector<FrameInfo> frame_infos(const SceneManifest& m);
/// Builds oracle ground truth from gt_points/gt_valid/pose of every frame.
std::vector<GroundTruthFrame> ground_truth(const SceneManifest& m);

// ---------------------------------------------------------------------------
// Tensors and small files

void write_tensor(const fs::path& path, const Tensor& t);
Tensor read_tensor(const fs::path& path);
void write_u32(const fs::path& path, const std::vector<std::uint32_t>& v, std::vector<std::uint64_t> dims = {});
std::vector<std::uint32_t> read_u32(const fs::path& path);
void write_points(const fs::path& path, const std::vector<Vec3>& pts);
std::vector<Vec3> read_points(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);
/// One class name per non-empty line.
std::vector<std::string> read_class_names(const fs::path& path);

Image read_image(const fs::path& path);
void write_image(const fs::path& path, const Image& image);

Tensor pose_rows(const Trajectory& t);  // K x 12: rotation row-major then translation
Trajectory trajectory_from_rows(const Tensor& rows, const std::vector<std::uint32_t>& ids);

// ---------------------------------------------------------------------------
// Persistence of pipeline and segmentation results

void save_scene(const fs::path& dir, const SceneState& state, const WindowConfig& cfg);
SceneState load_scene(const fs::path& dir);

/// Label maps: masks/<keyframe>.ovtf holding u32 H x W, 0 for background and
/// m + 1 for mask m.
void save_masks(const fs::path& dir, const std::map<std::uint32_t, MaskSet>& masks);
std::map<std::uint32_t, MaskSet> load_masks(const fs::path& dir);

/// Per-mask level features: <dir>/<keyframe>_<mask>_<level>.ovtf.
void save_level_inputs(const fs::path& dir, std::uint32_t keyframe, std::uint32_t mask, const LevelInputs& in);
LevelInputs load_level_inputs(const fs::path& dir, std::uint32_t keyframe, std::uint32_t mask);

void save_segments(const fs::path& dir, const SegmentTable& table);
SegmentTable load_segments(const fs::path& dir);

struct QueryResult {
  std::vector<std::uint32_t> point_labels;          // per scene point, kUnlabeled when unsegmented
  std::vector<std::uint32_t> segment_labels;
  std::vector<std::vector<double>> segment_scores;  // per segment, per class
  std::vector<std::string> classes;
};
void save_query(const fs::path& dir, const QueryResult& q);
QueryResult load_query(const fs::path& dir);

void save_model(const fs::path& dir, const FusionModel& m);
FusionModel load_model(const fs::path& dir);

void save_dataset(const fs::path& dir, const OvsDataset& d);
OvsDataset load_dataset(const fs::path& dir);

void write_loss_trace(const fs::path& path, const std::vector<double>& trace);

// ---------------------------------------------------------------------------
// Reports

struct MetricReport {
  std::optional<AccuracyCompletion> reconstruction;
  std::optional<double> distance_cap_m;
  std::optional<AteResult> ate;
  Alignment alignment = Alignment::sim3;
  std::optional<Sim3> cloud_alignment;
  std::optional<SemanticScores> semantic;
  std::optional<FrequencyWeighted> weighted;
  std::vector<std::string> classes;
};

std::string to_json(const MetricReport& r);
std::string per_class_csv(const MetricReport& r);

/// Run summary written next to a reconstructed scene.
std::string reconstruction_report(const SceneState& state, const WindowConfig& cfg);

}  // namespace ov3r::io
