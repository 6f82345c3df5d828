// ov3r command-line tool.
//
// Exit codes: 0 success, 2 validation error (bad input, bad files, contract
// violations, usage), 3 numeric failure (degenerate geometry, estimation or
// registration failure, failed self-test).
#include <algorithm>
#include <cstdint>
#include <chrono>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "criteria.hpp"
#include "ov3r/errors.hpp"
#include "ov3r/external_predictor.hpp"
#include "ov3r/io.hpp"
#include "ov3r/metrics.hpp"
#include "ov3r/nearest.hpp"
#include "ov3r/ovs.hpp"
#include "ov3r/pipeline.hpp"
#include "ov3r/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ov3r::cli {
namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

void write_json_file(const fs::path& p, const json& j) { io::write_text(p, j.dump(2) + "\n"); }

json read_json_file(const fs::path& p) {
  try {
    return json::parse(io::read_text(p));
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// reconstruct

struct ReconstructArgs {
  fs::path manifest;
  std::string predictor = "oracle";
  double noise = 0.0;
  fs::path out;
  std::optional<fs::path> exchange_dir;
  bool exchange_stream = false;
  double timeout_s = 600.0;
  std::optional<std::size_t> init_length, incremental_length, stride;
  bool no_pnp = false;
};

// Ground truth for the keyframes of `state`, laid out point-for-point like the
// reconstruction so that evaluation can compare labels by index.
void write_ground_truth(const fs::path& dir, const io::SceneManifest& m, const SceneState& state) {
  for (const auto& f : m.frames)
    if (!f.gt_points || !f.pose) return;
  const auto gt = io::ground_truth(m);
  const bool labelled =
      std::all_of(m.frames.begin(), m.frames.end(), [](const io::ManifestFrame& f) { return f.gt_labels.has_value(); });
  std::vector<Vec3> points;
  std::vector<std::uint32_t> labels;
  Trajectory traj;
  for (const auto& kf : state.keyframes) {
    const auto it = std::find_if(gt.begin(), gt.end(), [&](const GroundTruthFrame& g) { return g.id == kf.frame; });
    const auto& map = it->world_map;
    std::vector<std::uint32_t> frame_labels;
    if (labelled) {
      frame_labels = io::read_u32(*m.frame(kf.frame).gt_labels);
      if (frame_labels.size() != map.pixel_count()) throw ShapeError("gt_labels of frame " + std::to_string(kf.frame) + " differ in size from gt_points");
    }
    for (std::size_t p = 0; p < map.pixel_count(); ++p) {
      if (!map.valid[p]) continue;
      points.push_back(map.coords[p]);
      if (labelled) labels.push_back(frame_labels[p]);
    }
    traj.push_back({kf.frame, it->camera_to_world});
  }
  fs::create_directories(dir);
  io::write_points(dir / "world_points.ovtf", points);
  io::write_tensor(dir / "trajectory.ovtf", io::pose_rows(traj));
  std::vector<std::uint32_t> ids;
  for (const auto& e : traj) ids.push_back(e.frame);
  io::write_u32(dir / "trajectory_ids.ovtf", ids);
  if (labelled) io::write_u32(dir / "labels.ovtf", labels);
  std::string names;
  for (const auto& c : m.classes) names += c + "\n";
  io::write_text(dir / "classes.txt", names);
}

int reconstruct(const ReconstructArgs& a, const Globals& g) {
  const io::SceneManifest m = io::load_manifest(a.manifest);
  WindowConfig cfg = m.window;
  cfg.seed = g.seed;
  if (a.init_length) cfg.init_length = *a.init_length;
  if (a.incremental_length) cfg.incremental_length = *a.incremental_length;
  if (a.stride) cfg.stride = *a.stride;
  if (a.no_pnp) cfg.pnp_poses = false;
  cfg.validate();

  std::ostream& log = a.exchange_stream ? std::cerr : std::cout;
  std::unique_ptr<PointmapPredictor> predictor;
  if (a.predictor == "oracle") {
    if (!(a.noise >= 0.0)) throw ContractError("--noise must be non-negative");
    predictor = std::make_unique<OraclePredictor>(io::ground_truth(m), a.noise, g.seed);
  } else if (a.predictor == "external") {
    if (a.exchange_dir.has_value() == a.exchange_stream) {
      throw ContractError("external predictor needs exactly one of --exchange-dir or --exchange-stream");
    }
    const auto timeout = std::chrono::milliseconds(static_cast<std::int64_t>(a.timeout_s * 1000.0));
    if (a.exchange_dir) {
      fs::create_directories(*a.exchange_dir);
      predictor = std::make_unique<DirectoryPredictor>(*a.exchange_dir, timeout);
    } else {
      predictor = std::make_unique<StreamPredictor>(std::cin, std::cout);
    }
  } else {
    throw ContractError("unknown predictor '" + a.predictor + "' (expected oracle or external)");
  }

  const SceneState state = run_stream(io::frame_infos(m), *predictor, cfg);
  io::save_scene(a.out, state, cfg);
  write_json_file(a.out / "source.json", {{"manifest", fs::absolute(a.manifest).lexically_normal().string()}});
  write_ground_truth(a.out / "gt", m, state);

  log << "reconstructed " << state.frames_processed << " frames: " << state.keyframes.size() << " keyframes, "
      << state.world_points.size() << " points, " << state.frames_per_second() << " frames/s\n"
      << "scene written to " << a.out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// segment

int segment(const fs::path& scene_dir, const fs::path& masks_dir, double iou, double depth_tol, const fs::path& out) {
  const SceneState state = io::load_scene(scene_dir);
  auto masks = io::load_masks(masks_dir);
  std::size_t dropped = 0;
  for (auto it = masks.begin(); it != masks.end();) {
    if (state.find_keyframe(it->first)) {
      ++it;
    } else {
      it = masks.erase(it);
      ++dropped;
    }
  }
  if (masks.empty()) throw ContractError("no mask file in " + masks_dir.string() + " belongs to a keyframe");
  MatchOptions opt;
  opt.iou_threshold = iou;
  opt.depth_tolerance = depth_tol;
  if (!(iou >= 0.0 && iou <= 1.0)) throw ContractError("--iou must lie in [0, 1]");
  const SegmentTable t = match_segments(state, masks, opt);
  io::save_segments(out, t);
  std::size_t claimed = 0;
  for (auto s : t.point_segment) claimed += s >= 0;
  std::cout << t.segments.size() << " segments over " << masks.size() << " keyframes (" << dropped
            << " non-keyframe mask files ignored); " << claimed << "/" << state.world_points.size()
            << " points assigned\nsegments written to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// query

using FeatureSource = std::function<LevelInputs(std::uint32_t, std::uint32_t)>;

FeatureSource manifest_features(const fs::path& scene_dir) {
  const fs::path src = scene_dir / "source.json";
  if (!fs::exists(src)) {
    throw ContractError("no --features directory given and " + src.string() + " does not name a manifest");
  }
  const io::SceneManifest m = io::load_manifest(read_json_file(src).at("manifest").get<std::string>());
  auto bindings = std::make_shared<std::map<std::tuple<std::uint32_t, std::uint32_t, std::string>, fs::path>>();
  for (const auto& b : m.features) (*bindings)[{b.frame, b.mask, b.level}] = b.path;
  return [bindings](std::uint32_t kf, std::uint32_t mask) {
    LevelInputs in;
    Tensor* slots[] = {&in.clip_full, &in.clip_seg, &in.clip_oseg, &in.dino_full, &in.dino_seg, &in.point};
    for (std::size_t i = 0; i < 6; ++i) {
      const auto it = bindings->find({kf, mask, io::kLevels[i]});
      if (it == bindings->end()) {
        throw ContractError("manifest binds no " + std::string(io::kLevels[i]) + " feature for frame " +
                            std::to_string(kf) + ", mask " + std::to_string(mask));
      }
      *slots[i] = io::read_tensor(it->second);
    }
    return in;
  };
}

// Without a trained model the descriptor is the normalised mean of the three
// pooled CLIP levels.
std::vector<double> clip_only_descriptor(const LevelInputs& in) {
  const Tensor a = mean_rows(in.clip_full), b = mean_rows(in.clip_seg), c = mean_rows(in.clip_oseg);
  if (a.cols() != b.cols() || a.cols() != c.cols()) throw ShapeError("CLIP levels differ in width");
  const Tensor sum = add(add(a, b), c);
  return normalize_rows(sum).vec();
}

int query(const fs::path& scene_dir, const fs::path& segments_dir, const fs::path& text_path,
          const fs::path& classes_path, const std::optional<fs::path>& features_dir,
          const std::optional<fs::path>& model_dir, const fs::path& out) {
  const SceneState state = io::load_scene(scene_dir);
  SegmentTable table = io::load_segments(segments_dir);
  if (table.point_segment.size() != state.world_points.size()) {
    throw ContractError("segment table covers " + std::to_string(table.point_segment.size()) +
                        " points but the scene holds " + std::to_string(state.world_points.size()));
  }
  const Tensor text = normalize_rows(io::read_tensor(text_path));
  const auto classes = io::read_class_names(classes_path);
  if (classes.size() != text.rows()) {
    throw ContractError(std::to_string(classes.size()) + " class names for " + std::to_string(text.rows()) +
                        " text embeddings");
  }
  const FeatureSource features = features_dir
                                     ? FeatureSource([dir = *features_dir](std::uint32_t kf, std::uint32_t m) {
                                         return io::load_level_inputs(dir, kf, m);
                                       })
                                     : manifest_features(scene_dir);
  std::optional<FusionModel> model;
  if (model_dir) model = io::load_model(*model_dir);

  io::QueryResult q;
  q.classes = classes;
  q.point_labels.assign(state.world_points.size(), kUnlabeled);
  for (auto& seg : table.segments) {
    seg.weighted_sum.clear();
    seg.total_weight = 0.0;
    for (const auto& o : seg.observations) {
      const LevelInputs in = features(o.keyframe, o.mask);
      const auto d = model ? model->describe(in) : clip_only_descriptor(in);
      aggregate_segment_descriptor(seg, d, static_cast<double>(o.points));
    }
    const auto c = classify(seg.descriptor, text);
    seg.label = c.index;
    q.segment_labels.push_back(c.index);
    q.segment_scores.push_back(c.scores);
    for (auto p : seg.points) q.point_labels[p] = c.index;
  }
  io::save_query(out, q);
  std::map<std::uint32_t, std::size_t> counts;
  for (auto l : q.segment_labels) ++counts[l];
  std::cout << "labelled " << table.segments.size() << " segments"
            << (model ? "" : " (no --model: pooled CLIP descriptors)") << ":";
  for (const auto& [cls, n] : counts) std::cout << " " << classes[cls] << "=" << n;
  std::cout << "\nlabels written to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-ovs

struct TrainArgs {
  fs::path dataset;
  std::size_t epochs = 15;
  std::size_t batch = 512;
  double lr = 1e-2;
  fs::path out;
  bool no_dino = false, no_point = false, scalar_weights = false, no_projections = false;
};

int train_ovs(const TrainArgs& a, const Globals& g) {
  const OvsDataset data = io::load_dataset(a.dataset);
  data.validate();
  FusionConfig fc;
  fc.clip_dim = data.inputs.front().clip_full.cols();
  fc.dino_dim = data.inputs.front().dino_full.cols();
  fc.point_dim = data.inputs.front().point.cols();
  fc.use_dino = !a.no_dino;
  fc.use_point = !a.no_point;
  fc.scalar_weights = a.scalar_weights;
  fc.attention_projections = !a.no_projections;
  fc.seed = g.seed;
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.optimizer.learning_rate = a.lr;
  tc.seed = g.seed;
  const auto r = train_fusion(data, FusionModel(fc), tc);
  io::save_model(a.out, r.model);
  io::write_loss_trace(a.out / "loss.csv", r.loss_trace);
  std::cout << "trained " << a.epochs << " epochs on " << data.inputs.size() << " segments; loss "
            << r.loss_trace.front() << " -> " << r.loss_trace.back() << "; training accuracy "
            << accuracy(r.model, data) * 100.0 << "%\nmodel written to " << a.out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvalArgs {
  fs::path pred, gt;
  std::string metrics = "acc,comp,ate";
  std::string align = "sim3";
  std::optional<double> cap;
  std::optional<fs::path> labels;
  std::optional<fs::path> out;
};

Trajectory load_trajectory(const fs::path& dir) {
  const auto ids = io::read_u32(dir / "trajectory_ids.ovtf");
  return io::trajectory_from_rows(io::read_tensor(dir / "trajectory.ovtf"), ids);
}

int evaluate(const EvalArgs& a, const Globals& g) {
  std::set<std::string> wanted;
  {
    std::stringstream ss(a.metrics);
    for (std::string m; std::getline(ss, m, ',');) {
      if (m.empty()) continue;
      static const std::set<std::string> known{"acc", "comp", "ate", "miou", "f"};
      if (!known.count(m)) throw ContractError("unknown metric '" + m + "' (expected acc, comp, ate, miou, f)");
      wanted.insert(m);
    }
  }
  if (wanted.empty()) throw ContractError("--metrics selects nothing");

  io::MetricReport report;
  report.alignment = parse_alignment(a.align);
  report.distance_cap_m = a.cap;
  const Trajectory pred_traj = load_trajectory(a.pred), gt_traj = load_trajectory(a.gt);
  Sim3 align;
  if (report.alignment != Alignment::none) align = align_trajectories(pred_traj, gt_traj, report.alignment);
  report.cloud_alignment = align;

  std::vector<Vec3> pred_points;
  const bool need_cloud = wanted.count("acc") || wanted.count("comp") || wanted.count("miou") || wanted.count("f");
  std::vector<Vec3> gt_points;
  if (need_cloud) {
    for (const auto& p : io::read_points(a.pred / "world_points.ovtf")) pred_points.push_back(align.apply(p));
    gt_points = io::read_points(a.gt / "world_points.ovtf");
  }
  if (wanted.count("acc") || wanted.count("comp")) {
    report.reconstruction = accuracy_completion(pred_points, gt_points, a.cap, g.threads);
  }
  if (wanted.count("ate")) report.ate = ate_rmse(pred_traj, gt_traj, report.alignment);

  if (wanted.count("miou") || wanted.count("f")) {
    report.classes = io::read_class_names(a.gt / "classes.txt");
    const fs::path label_file = a.labels ? *a.labels / "labels.ovtf" : a.pred / "labels.ovtf";
    const auto pred_labels = io::read_u32(label_file);
    if (pred_labels.size() != pred_points.size()) {
      throw ShapeError(label_file.string() + " holds " + std::to_string(pred_labels.size()) + " labels for " +
                       std::to_string(pred_points.size()) + " points");
    }
    auto gt_labels = io::read_u32(a.gt / "labels.ovtf");
    if (gt_labels.size() != gt_points.size()) throw ShapeError("gt labels and gt points differ in count");
    if (gt_labels.size() != pred_labels.size()) {
      // Different point sets: each predicted point takes the label of its nearest gt point.
      const KdTree tree(gt_points);
      std::vector<std::uint32_t> transferred(pred_points.size());
      for (std::size_t i = 0; i < pred_points.size(); ++i) transferred[i] = gt_labels[tree.nearest(pred_points[i]).index];
      gt_labels = std::move(transferred);
    }
    std::vector<std::uint32_t> subset(report.classes.size());
    for (std::uint32_t c = 0; c < subset.size(); ++c) subset[c] = c;
    for (auto l : gt_labels) {
      if (l != kUnlabeled && l >= subset.size()) throw ContractError("gt label " + std::to_string(l) + " has no class name");
    }
    report.semantic = miou_macc(pred_labels, gt_labels, subset);
    if (wanted.count("f")) report.weighted = f_weighted(*report.semantic);
  }

  const std::string js = io::to_json(report);
  if (a.out) {
    fs::create_directories(*a.out);
    io::write_text(*a.out / "report.json", js + "\n");
    if (report.semantic) io::write_text(*a.out / "per_class.csv", io::per_class_csv(report));
  }
  std::cout << js << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// selftest

int selftest(const std::vector<int>& only) {
  const auto ids = only.empty() ? criteria::ids() : only;
  int failed = 0;
  for (int id : ids) {
    const auto r = criteria::run(id);
    std::cout << criteria::format(r) << std::endl;
    failed += r.passed ? 0 : 1;
  }
  std::cout << ids.size() - static_cast<std::size_t>(failed) << "/" << ids.size() << " checks passed\n";
  return failed == 0 ? 0 : 3;
}

// ---------------------------------------------------------------------------
// synth-room: a complete fixture (manifest, ground truth, masks, per-mask
// features, text embeddings and a training set) for the commands above.

struct SynthArgs {
  fs::path out;
  std::size_t frames = 48;
  std::size_t width = 64, height = 48;
  std::size_t dim = 16;
  double feature_noise = 0.05;
};

int synth_room(const SynthArgs& a, const Globals& g) {
  synth::RoomConfig rc;
  rc.frames = a.frames;
  rc.width = a.width;
  rc.height = a.height;
  rc.seed = g.seed;
  const synth::Scene scene = synth::make_room(rc);
  const Tensor text = synth::text_embeddings(scene.classes.size(), a.dim, g.seed + 1);
  synth::Providers providers(scene, text, 8, 8, a.feature_noise, g.seed + 2);

  const fs::path frames_dir = a.out / "frames", feat_dir = a.out / "features";
  fs::create_directories(frames_dir);
  fs::create_directories(feat_dir);
  io::SceneManifest m;
  m.classes = scene.classes;
  m.text_embeddings = a.out / "text.ovtf";
  m.feature_dim = a.dim;
  io::write_tensor(*m.text_embeddings, text);
  std::string names;
  for (const auto& c : scene.classes) names += c + "\n";
  io::write_text(a.out / "classes.txt", names);

  std::map<std::uint32_t, MaskSet> masks;
  for (const auto& v : scene.views) {
    const std::string stem = std::to_string(v.id);
    io::ManifestFrame f;
    f.id = v.id;
    f.image = frames_dir / (stem + "_image.ovtf");
    io::write_image(f.image, v.image);
    f.intrinsics = v.intrinsics;
    f.pose = v.camera_to_world;
    f.gt_points = frames_dir / (stem + "_points.ovtf");
    std::vector<double> pts;
    for (const auto& c : v.world_map.coords) pts.insert(pts.end(), {c.x(), c.y(), c.z()});
    ovtf::write(*f.gt_points, ovtf::Blob::f64({v.world_map.height, v.world_map.width, 3}, pts));
    f.gt_valid = frames_dir / (stem + "_valid.ovtf");
    ovtf::write(*f.gt_valid, ovtf::Blob::u8({v.world_map.height, v.world_map.width}, v.world_map.valid));
    f.gt_labels = frames_dir / (stem + "_labels.ovtf");
    io::write_u32(*f.gt_labels, synth::pixel_classes(scene, v), {v.world_map.height, v.world_map.width});
    f.features = frames_dir / (stem + "_tokens.ovtf");
    io::write_tensor(*f.features, providers.clip(v.image));
    m.frames.push_back(f);

    masks[v.id] = synth::object_masks(v);
    for (std::uint32_t k = 0; k < masks[v.id].size(); ++k) {
      const LevelInputs in = build_levels(v.image, masks[v.id].masks[k], v.world_map, providers);
      io::save_level_inputs(feat_dir, v.id, k, in);
      for (const char* level : io::kLevels) {
        m.features.push_back({v.id, k, level, feat_dir / (stem + "_" + std::to_string(k) + "_" + level + ".ovtf")});
      }
    }
  }
  io::save_masks(a.out / "masks", masks);
  io::save_dataset(a.out / "dataset", synth::view_dataset(scene, providers));
  io::save_manifest(a.out / "manifest.json", m);
  std::cout << "synthetic room: " << scene.views.size() << " frames, " << scene.classes.size() << " classes, "
            << m.features.size() << " feature bindings\nmanifest written to " << (a.out / "manifest.json").string()
            << "\n";
  return 0;
}

}  // namespace
}  // namespace ov3r::cli

int main(int argc, char** argv) {
  using namespace ov3r;
  using namespace ov3r::cli;

  CLI::App app{"ov3r: incremental pointmap reconstruction and open-vocabulary 3D segmentation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads for nearest-neighbour metrics")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  ReconstructArgs rec;
  auto* c_rec = app.add_subcommand("reconstruct", "Run the incremental reconstruction over a scene manifest");
  c_rec->add_option("--manifest", rec.manifest, "Scene manifest (JSON)")->required();
  c_rec->add_option("--predictor", rec.predictor, "oracle or external")->capture_default_str();
  c_rec->add_option("--noise", rec.noise, "Oracle predictor noise sigma in metres")->capture_default_str();
  c_rec->add_option("--out", rec.out, "Output scene directory")->required();
  c_rec->add_option("--exchange-dir", rec.exchange_dir, "Directory watched by an external predictor");
  c_rec->add_flag("--exchange-stream", rec.exchange_stream,
                  "Exchange OVTF frames with an external predictor over stdout (requests) and stdin (responses)");
  c_rec->add_option("--timeout", rec.timeout_s, "Seconds to wait for each external response")->capture_default_str();
  c_rec->add_option("--init-length", rec.init_length, "Initial window length (odd)");
  c_rec->add_option("--window", rec.incremental_length, "Incremental window length (odd)");
  c_rec->add_option("--stride", rec.stride, "Keyframe stride");
  c_rec->add_flag("--no-pnp", rec.no_pnp, "Take keyframe poses from registration instead of PnP-RANSAC");

  fs::path seg_scene, seg_masks, seg_out;
  double seg_iou = 0.5, seg_depth = 0.05;
  auto* c_seg = app.add_subcommand("segment", "Match per-keyframe masks into 3D segments");
  c_seg->add_option("--scene", seg_scene, "Scene directory from reconstruct")->required();
  c_seg->add_option("--masks", seg_masks, "Directory of <frame>.ovtf label maps")->required();
  c_seg->add_option("--iou", seg_iou, "Merge threshold")->capture_default_str();
  c_seg->add_option("--depth-tolerance", seg_depth, "Relative depth slack for visibility")->capture_default_str();
  c_seg->add_option("--out", seg_out, "Output segment directory")->required();

  fs::path q_scene, q_text, q_classes, q_out;
  std::optional<fs::path> q_segments, q_features, q_model;
  auto* c_q = app.add_subcommand("query", "Label segments by text-embedding similarity");
  c_q->add_option("--scene", q_scene, "Scene directory from reconstruct")->required();
  c_q->add_option("--segments", q_segments, "Segment directory (default <scene>/segments)");
  c_q->add_option("--text-emb", q_text, "Text embeddings, OVTF C x D")->required();
  c_q->add_option("--classes", q_classes, "Class names, one per line")->required();
  c_q->add_option("--features", q_features, "Per-mask level features (default: the manifest's bindings)");
  c_q->add_option("--model", q_model, "Trained fusion model directory");
  c_q->add_option("--out", q_out, "Output directory")->required();

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train-ovs", "Train the fusion head with the sigmoid similarity loss");
  c_tr->add_option("--dataset", tr.dataset, "Dataset directory")->required();
  c_tr->add_option("--epochs", tr.epochs)->capture_default_str();
  c_tr->add_option("--batch", tr.batch)->capture_default_str();
  c_tr->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
  c_tr->add_option("--out", tr.out, "Output model directory")->required();
  c_tr->add_flag("--no-dino", tr.no_dino, "Disable the DINO branch");
  c_tr->add_flag("--no-point", tr.no_point, "Disable the 3D point encoder");
  c_tr->add_flag("--scalar-weights", tr.scalar_weights, "One merging weight per level");
  c_tr->add_flag("--no-attention-projections", tr.no_projections, "Plain attention without learned projections");

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Score a reconstruction and its labels against ground truth");
  c_ev->add_option("--pred", ev.pred, "Scene directory")->required();
  c_ev->add_option("--gt", ev.gt, "Ground-truth directory (reconstruct writes <out>/gt)")->required();
  c_ev->add_option("--metrics", ev.metrics, "Comma list of acc, comp, ate, miou, f")->capture_default_str();
  c_ev->add_option("--align", ev.align, "sim3, se3 or none")->capture_default_str();
  c_ev->add_option("--cap", ev.cap, "Clamp nearest-neighbour distances (metres)");
  c_ev->add_option("--labels", ev.labels, "Query output directory holding labels.ovtf");
  c_ev->add_option("--out", ev.out, "Write report.json and per_class.csv here");

  std::vector<int> only;
  auto* c_self = app.add_subcommand("selftest", "Run the oracle, gradient and end-to-end checks");
  c_self->add_option("--only", only, "Criterion ids to run");

  SynthArgs sy;
  auto* c_sy = app.add_subcommand("synth-room", "Write a synthetic room fixture with manifest and features");
  c_sy->add_option("--out", sy.out)->required();
  c_sy->add_option("--frames", sy.frames)->capture_default_str();
  c_sy->add_option("--width", sy.width)->capture_default_str();
  c_sy->add_option("--height", sy.height)->capture_default_str();
  c_sy->add_option("--dim", sy.dim, "CLIP and text embedding width")->capture_default_str();
  c_sy->add_option("--feature-noise", sy.feature_noise)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (c_rec->parsed()) return reconstruct(rec, g);
    if (c_seg->parsed()) return segment(seg_scene, seg_masks, seg_iou, seg_depth, seg_out);
    if (c_q->parsed()) {
      return query(q_scene, q_segments.value_or(q_scene / "segments"), q_text, q_classes, q_features, q_model, q_out);
    }
    if (c_tr->parsed()) return train_ovs(tr, g);
    if (c_ev->parsed()) return evaluate(ev, g);
    if (c_self->parsed()) return selftest(only);
    if (c_sy->parsed()) return synth_room(sy, g);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const PipelineError& e) {
    std::cerr << "pipeline failure at frame " << e.frame_index() << ": " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
