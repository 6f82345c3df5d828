#include "ov3r/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "ov3r/errors.hpp"
#include "ov3r/ovtf.hpp"

namespace ov3r::io {

using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  return fs::weakly_canonical(path);
}

std::string relative_to(const fs::path& base, const fs::path& p) {
  const auto abs = fs::weakly_canonical(p);
  const auto rel = abs.lexically_relative(fs::weakly_canonical(base));
  return rel.empty() ? abs.string() : rel.generic_string();
}

json intrinsics_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

Intrinsics intrinsics_from(const json& j) {
  Intrinsics k{j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
               j.at("cy").get<double>(), j.at("width").get<std::size_t>(), j.at("height").get<std::size_t>()};
  k.validate();
  return k;
}

json pose_json(const Pose& p) {
  json a = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a.push_back(p.rotation(r, c));
  for (int r = 0; r < 3; ++r) a.push_back(p.translation[r]);
  return a;
}

Pose pose_from(const std::vector<double>& v, std::size_t off = 0) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 3; ++c) r(i, c) = v.at(off + static_cast<std::size_t>(3 * i + c));
  return Pose(r, Vec3(v.at(off + 9), v.at(off + 10), v.at(off + 11)));
}

json sim3_json(const Sim3& s) {
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 3; ++c) r.push_back(s.rotation(i, c));
  return {{"scale", s.scale}, {"rotation", r}, {"translation", {s.translation[0], s.translation[1], s.translation[2]}}};
}

Sim3 sim3_from(const json& j) {
  const auto r = j.at("rotation").get<std::vector<double>>();
  const auto t = j.at("translation").get<std::vector<double>>();
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 3; ++c) m(i, c) = r.at(static_cast<std::size_t>(3 * i + c));
  return Sim3(j.at("scale").get<double>(), m, Vec3(t.at(0), t.at(1), t.at(2)));
}

json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("file not found: " + path.string());
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

template <class F>
auto guarded(const fs::path& path, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw ContractError(what + ": missing file " + p.string());
}

json window_json(const WindowConfig& w) {
  return {{"init_length", w.init_length},         {"incremental_length", w.incremental_length},
          {"stride", w.effective_stride()},       {"retrieval_k", w.retrieval_k},
          {"reservoir_capacity", w.reservoir_capacity}, {"seed", w.seed},
          {"pnp_poses", w.pnp_poses},             {"pnp_max_points", w.pnp_max_points}};
}

WindowConfig window_from(const json& j) {
  WindowConfig w;
  w.init_length = j.value("init_length", w.init_length);
  w.incremental_length = j.value("incremental_length", w.incremental_length);
  w.stride = j.value("stride", w.stride);
  w.retrieval_k = j.value("retrieval_k", w.retrieval_k);
  w.reservoir_capacity = j.value("reservoir_capacity", w.reservoir_capacity);
  w.seed = j.value("seed", w.seed);
  w.pnp_poses = j.value("pnp_poses", w.pnp_poses);
  w.pnp_max_points = j.value("pnp_max_points", w.pnp_max_points);
  w.validate();
  return w;
}

json manifest_json(const SceneManifest& m, const fs::path* base) {
  auto p = [base](const fs::path& path) { return base ? relative_to(*base, path) : path.string(); };
  json frames = json::array();
  for (const auto& f : m.frames) {
    json j{{"id", f.id}, {"image", p(f.image)}};
    if (f.intrinsics) j["intrinsics"] = intrinsics_json(*f.intrinsics);
    if (f.pose) j["pose"] = pose_json(*f.pose);
    if (f.gt_points) j["gt_points"] = p(*f.gt_points);
    if (f.gt_valid) j["gt_valid"] = p(*f.gt_valid);
    if (f.gt_labels) j["gt_labels"] = p(*f.gt_labels);
    if (f.features) j["features"] = p(*f.features);
    frames.push_back(std::move(j));
  }
  json bindings = json::array();
  for (const auto& b : m.features) {
    bindings.push_back({{"frame", b.frame}, {"mask", b.mask}, {"level", b.level}, {"path", p(b.path)}});
  }
  json cfg = window_json(m.window);
  cfg["iou_threshold"] = m.iou_threshold;
  json out{{"version", 1}, {"frames", frames}, {"features", bindings}, {"classes", m.classes}, {"config", cfg}};
  if (m.text_embeddings) out["text_embeddings"] = p(*m.text_embeddings);
  if (m.feature_dim) out["feature_dim"] = *m.feature_dim;
  return out;
}

std::vector<double> read_f64(const fs::path& p) { return ovtf::read(p).to_f64(); }

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

const ManifestFrame& SceneManifest::frame(std::uint32_t id) const {
  for (const auto& f : frames)
    if (f.id == id) return f;
  throw ContractError("manifest has no frame " + std::to_string(id));
}

void validate_manifest(const SceneManifest& m) {
  if (m.frames.empty()) throw ContractError("manifest lists no frames");
  std::set<std::uint32_t> ids;
  for (const auto& f : m.frames) {
    if (!ids.insert(f.id).second) throw ContractError("duplicate frame id " + std::to_string(f.id));
    const std::string tag = "frame " + std::to_string(f.id);
    require_file(f.image, tag + " image");
    if (f.gt_points) require_file(*f.gt_points, tag + " gt_points");
    if (f.gt_valid) require_file(*f.gt_valid, tag + " gt_valid");
    if (f.gt_labels) require_file(*f.gt_labels, tag + " gt_labels");
    if (f.features) require_file(*f.features, tag + " features");
  }
  std::set<std::tuple<std::uint32_t, std::uint32_t, std::string>> seen;
  for (const auto& b : m.features) {
    const std::string tag = "feature binding (frame " + std::to_string(b.frame) + ", mask " + std::to_string(b.mask) +
                            ", level " + b.level + ")";
    if (!ids.count(b.frame)) throw ContractError(tag + " refers to an unknown frame");
    if (std::find(std::begin(kLevels), std::end(kLevels), b.level) == std::end(kLevels)) {
      throw ContractError(tag + " has an unknown level");
    }
    if (!seen.insert({b.frame, b.mask, b.level}).second) throw ContractError(tag + " is bound twice");
    require_file(b.path, tag);
  }
  if (m.text_embeddings) require_file(*m.text_embeddings, "text embeddings");
  if (!(m.iou_threshold >= 0.0 && m.iou_threshold <= 1.0)) throw ContractError("iou_threshold must lie in [0, 1]");
  m.window.validate();
}

SceneManifest load_manifest(const fs::path& path) {
  const json j = read_json(path);
  const fs::path base = fs::weakly_canonical(path).parent_path();
  SceneManifest m = guarded(path, [&] {
    SceneManifest m;
    for (const auto& f : j.at("frames")) {
      ManifestFrame fr;
      fr.id = f.at("id").get<std::uint32_t>();
      fr.image = resolve(base, f.at("image").get<std::string>());
      if (f.contains("intrinsics")) fr.intrinsics = intrinsics_from(f.at("intrinsics"));
      if (f.contains("pose")) fr.pose = pose_from(f.at("pose").get<std::vector<double>>());
      if (f.contains("gt_points")) fr.gt_points = resolve(base, f.at("gt_points").get<std::string>());
      if (f.contains("gt_valid")) fr.gt_valid = resolve(base, f.at("gt_valid").get<std::string>());
      if (f.contains("gt_labels")) fr.gt_labels = resolve(base, f.at("gt_labels").get<std::string>());
      if (f.contains("features")) fr.features = resolve(base, f.at("features").get<std::string>());
      m.frames.push_back(std::move(fr));
    }
    if (j.contains("features")) {
      for (const auto& b : j.at("features")) {
        m.features.push_back({b.at("frame").get<std::uint32_t>(), b.at("mask").get<std::uint32_t>(),
                              b.at("level").get<std::string>(), resolve(base, b.at("path").get<std::string>())});
      }
    }
    if (j.contains("text_embeddings")) m.text_embeddings = resolve(base, j.at("text_embeddings").get<std::string>());
    if (j.contains("classes")) m.classes = j.at("classes").get<std::vector<std::string>>();
    if (j.contains("config")) {
      m.window = window_from(j.at("config"));
      m.iou_threshold = j.at("config").value("iou_threshold", 0.5);
    }
    if (j.contains("feature_dim")) m.feature_dim = j.at("feature_dim").get<std::size_t>();
    return m;
  });
  validate_manifest(m);
  return m;
}

void save_manifest(const fs::path& path, const SceneManifest& m) {
  const fs::path base = fs::absolute(path).parent_path();
  fs::create_directories(base);
  write_json(path, manifest_json(m, &base));
}

std::string canonical_json(const SceneManifest& m) { return manifest_json(m, nullptr).dump(); }

std::vector<FrameInfo> frame_infos(const SceneManifest& m) {
  std::vector<FrameInfo> out;
  for (const auto& f : m.frames) out.push_back({f.id, f.intrinsics});
  return out;
}

std::vector<GroundTruthFrame> ground_truth(const SceneManifest& m) {
  std::vector<GroundTruthFrame> out;
  for (const auto& f : m.frames) {
    if (!f.gt_points || !f.pose) {
      throw ContractError("frame " + std::to_string(f.id) + " lacks gt_points or pose for the oracle predictor");
    }
    const auto blob = ovtf::read(*f.gt_points);
    if (blob.dims.size() != 3 || blob.dims[2] != 3) throw ShapeError(f.gt_points->string() + ": expected H x W x 3");
    const std::size_t h = blob.dims[0], w = blob.dims[1];
    const auto pts = blob.to_f64();
    GroundTruthFrame g;
    g.id = f.id;
    g.camera_to_world = *f.pose;
    g.world_map = PointMap::blank(w, h, FrameKind::world);
    std::vector<std::uint8_t> valid(w * h, 1);
    if (f.gt_valid) {
      const auto vb = ovtf::read(*f.gt_valid);
      if (vb.element_count() != w * h) throw ShapeError(f.gt_valid->string() + ": size differs from gt_points");
      valid = vb.to_u8();
    }
    for (std::size_t p = 0; p < w * h; ++p) {
      g.world_map.coords[p] = Vec3(pts[3 * p], pts[3 * p + 1], pts[3 * p + 2]);
      g.world_map.valid[p] = valid[p] ? 1 : 0;
    }
    g.world_map.validate();
    if (f.features) {
      g.features = read_tensor(*f.features);
      g.has_features = true;
    }
    out.push_back(std::move(g));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tensors and small files

void write_tensor(const fs::path& path, const Tensor& t) { ovtf::write(path, ovtf::Blob::from_tensor(t)); }
Tensor read_tensor(const fs::path& path) { return ovtf::read(path).to_tensor(); }

void write_u32(const fs::path& path, const std::vector<std::uint32_t>& v, std::vector<std::uint64_t> dims) {
  if (dims.empty()) dims = {v.size()};
  ovtf::write(path, ovtf::Blob::u32(std::move(dims), v));
}

std::vector<std::uint32_t> read_u32(const fs::path& path) { return ovtf::read(path).to_u32(); }

void write_points(const fs::path& path, const std::vector<Vec3>& pts) {
  std::vector<double> v;
  v.reserve(pts.size() * 3);
  for (const auto& p : pts) v.insert(v.end(), {p.x(), p.y(), p.z()});
  ovtf::write(path, ovtf::Blob::f64({pts.size(), 3}, v));
}

std::vector<Vec3> read_points(const fs::path& path) {
  const auto b = ovtf::read(path);
  if (b.dims.size() != 2 || b.dims[1] != 3) throw ShapeError(path.string() + ": expected N x 3 points");
  const auto v = b.to_f64();
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < b.dims[0]; ++i) out.emplace_back(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::string> read_class_names(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.push_back(line.substr(b, e - b + 1));
  }
  if (out.empty()) throw ContractError(path.string() + " lists no classes");
  return out;
}

Image read_image(const fs::path& path) {
  const auto b = ovtf::read(path);
  if (b.dims.size() != 3) throw ShapeError(path.string() + ": expected an H x W x C image");
  Image img{b.dims[1], b.dims[0], b.dims[2], {}};
  if (b.dtype == ovtf::DType::u8) {
    for (auto v : b.to_u8()) img.data.push_back(static_cast<double>(v) / 255.0);
  } else {
    img.data = b.to_f64();
  }
  img.validate();
  return img;
}

void write_image(const fs::path& path, const Image& image) {
  image.validate();
  ovtf::write(path, ovtf::Blob::f64({image.height, image.width, image.channels}, image.data));
}

Tensor pose_rows(const Trajectory& t) {
  std::vector<double> v;
  for (const auto& e : t) {
    for (const auto& x : pose_json(e.pose)) v.push_back(x.get<double>());
  }
  if (t.empty()) throw ContractError("cannot store an empty trajectory");
  return Tensor({t.size(), 12}, std::move(v));
}

Trajectory trajectory_from_rows(const Tensor& rows, const std::vector<std::uint32_t>& ids) {
  if (rows.dims().size() != 2 || rows.cols() != 12) throw ShapeError("trajectory rows must be K x 12");
  if (ids.size() != rows.rows()) throw ShapeError("trajectory ids and rows differ in count");
  Trajectory t;
  for (std::size_t i = 0; i < ids.size(); ++i) t.push_back({ids[i], pose_from(rows.vec(), 12 * i)});
  return t;
}

// ---------------------------------------------------------------------------
// Scene

void save_scene(const fs::path& dir, const SceneState& state, const WindowConfig& cfg) {
  fs::create_directories(dir / "keyframes");
  write_points(dir / "world_points.ovtf", state.world_points);
  ovtf::write(dir / "confidences.ovtf", ovtf::Blob::f64({state.confidences.size()}, state.confidences));
  std::vector<std::uint32_t> ids;
  for (const auto& e : state.trajectory) ids.push_back(e.frame);
  if (!state.trajectory.empty()) write_tensor(dir / "trajectory.ovtf", pose_rows(state.trajectory));
  write_u32(dir / "trajectory_ids.ovtf", ids);

  json kfs = json::array();
  for (const auto& k : state.keyframes) {
    json j{{"frame", k.frame},
           {"pose_source", to_string(k.pose_source)},
           {"point_offset", k.point_offset},
           {"overlap", k.overlap},
           {"registered_against", k.registered_against},
           {"local_to_world", sim3_json(k.local_to_world)},
           {"camera_to_world", pose_json(k.camera_to_world)}};
    if (k.intrinsics) j["intrinsics"] = intrinsics_json(*k.intrinsics);
    kfs.push_back(std::move(j));
    const auto& pm = k.world_map;
    const std::string stem = std::to_string(k.frame);
    std::vector<double> pts;
    for (const auto& c : pm.coords) pts.insert(pts.end(), {c.x(), c.y(), c.z()});
    ovtf::write(dir / "keyframes" / (stem + "_points.ovtf"), ovtf::Blob::f64({pm.height, pm.width, 3}, pts));
    ovtf::write(dir / "keyframes" / (stem + "_conf.ovtf"), ovtf::Blob::f64({pm.height, pm.width}, pm.confidence));
    ovtf::write(dir / "keyframes" / (stem + "_valid.ovtf"), ovtf::Blob::u8({pm.height, pm.width}, pm.valid));
  }
  json j = json::parse(reconstruction_report(state, cfg));
  j["keyframe_records"] = kfs;
  write_json(dir / "scene.json", j);
}

SceneState load_scene(const fs::path& dir) {
  const fs::path meta = dir / "scene.json";
  const json j = read_json(meta);
  SceneState s;
  s.world_points = read_points(dir / "world_points.ovtf");
  s.confidences = read_f64(dir / "confidences.ovtf");
  if (s.confidences.size() != s.world_points.size()) throw ShapeError("scene confidences and points differ in count");
  guarded(meta, [&] {
    s.frames_processed = j.at("frames_processed").get<std::size_t>();
    s.seconds = j.at("seconds").get<double>();
    s.stride = j.at("stride").get<std::size_t>();
    for (const auto& k : j.at("keyframe_records")) {
      KeyframeRecord r;
      r.frame = k.at("frame").get<std::uint32_t>();
      r.pose_source = k.at("pose_source").get<std::string>() == "pnp" ? PoseSource::pnp : PoseSource::registration;
      r.point_offset = k.at("point_offset").get<std::size_t>();
      r.overlap = k.at("overlap").get<std::size_t>();
      r.registered_against = k.at("registered_against").get<std::vector<std::uint32_t>>();
      r.local_to_world = sim3_from(k.at("local_to_world"));
      r.camera_to_world = pose_from(k.at("camera_to_world").get<std::vector<double>>());
      if (k.contains("intrinsics")) r.intrinsics = intrinsics_from(k.at("intrinsics"));
      const std::string stem = std::to_string(r.frame);
      const auto pb = ovtf::read(dir / "keyframes" / (stem + "_points.ovtf"));
      if (pb.dims.size() != 3 || pb.dims[2] != 3) throw ShapeError("keyframe " + stem + " points must be H x W x 3");
      r.world_map = PointMap::blank(pb.dims[1], pb.dims[0], FrameKind::world, r.frame);
      const auto pts = pb.to_f64();
      const auto conf = read_f64(dir / "keyframes" / (stem + "_conf.ovtf"));
      const auto valid = ovtf::read(dir / "keyframes" / (stem + "_valid.ovtf")).to_u8();
      if (conf.size() != r.world_map.pixel_count() || valid.size() != r.world_map.pixel_count()) {
        throw ShapeError("keyframe " + stem + " tensors disagree in size");
      }
      for (std::size_t p = 0; p < r.world_map.pixel_count(); ++p) {
        r.world_map.coords[p] = Vec3(pts[3 * p], pts[3 * p + 1], pts[3 * p + 2]);
        r.world_map.confidence[p] = conf[p];
        r.world_map.valid[p] = valid[p];
      }
      r.world_map.validate();
      s.trajectory.push_back({r.frame, r.camera_to_world});
      s.keyframes.push_back(std::move(r));
    }
    return 0;
  });
  return s;
}

// ---------------------------------------------------------------------------
// Masks and level features

void save_masks(const fs::path& dir, const std::map<std::uint32_t, MaskSet>& masks) {
  fs::create_directories(dir);
  for (const auto& [kf, set] : masks) {
    set.validate();
    std::vector<std::uint32_t> labels(set.width * set.height, 0);
    for (std::size_t m = set.masks.size(); m-- > 0;) {
      for (std::size_t p = 0; p < labels.size(); ++p)
        if (set.masks[m][p]) labels[p] = static_cast<std::uint32_t>(m + 1);
    }
    write_u32(dir / (std::to_string(kf) + ".ovtf"), labels, {set.height, set.width});
  }
}

std::map<std::uint32_t, MaskSet> load_masks(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("mask directory not found: " + dir.string());
  std::map<std::uint32_t, MaskSet> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".ovtf") continue;
    const std::string stem = entry.path().stem().string();
    if (stem.empty() || !std::all_of(stem.begin(), stem.end(), ::isdigit)) continue;
    const auto blob = ovtf::read(entry.path());
    if (blob.dims.size() != 2) throw ShapeError(entry.path().string() + ": label map must be H x W");
    const auto labels = blob.to_u32();
    MaskSet set{blob.dims[1], blob.dims[0], {}};
    std::uint32_t count = 0;
    for (auto l : labels) count = std::max(count, l);
    set.masks.assign(count, Mask(labels.size(), 0));
    for (std::size_t p = 0; p < labels.size(); ++p)
      if (labels[p]) set.masks[labels[p] - 1][p] = 1;
    for (std::size_t m = 0; m < set.masks.size(); ++m) {
      if (std::find(set.masks[m].begin(), set.masks[m].end(), 1) == set.masks[m].end()) {
        throw ContractError(entry.path().string() + ": label map skips mask " + std::to_string(m));
      }
    }
    out.emplace(static_cast<std::uint32_t>(std::stoul(stem)), std::move(set));
  }
  return out;
}

void save_level_inputs(const fs::path& dir, std::uint32_t keyframe, std::uint32_t mask, const LevelInputs& in) {
  fs::create_directories(dir);
  const std::string stem = std::to_string(keyframe) + "_" + std::to_string(mask) + "_";
  const Tensor* t[] = {&in.clip_full, &in.clip_seg, &in.clip_oseg, &in.dino_full, &in.dino_seg, &in.point};
  for (std::size_t i = 0; i < 6; ++i) write_tensor(dir / (stem + kLevels[i] + ".ovtf"), *t[i]);
}

LevelInputs load_level_inputs(const fs::path& dir, std::uint32_t keyframe, std::uint32_t mask) {
  const std::string stem = std::to_string(keyframe) + "_" + std::to_string(mask) + "_";
  LevelInputs in;
  Tensor* t[] = {&in.clip_full, &in.clip_seg, &in.clip_oseg, &in.dino_full, &in.dino_seg, &in.point};
  for (std::size_t i = 0; i < 6; ++i) {
    const auto p = dir / (stem + kLevels[i] + ".ovtf");
    if (!fs::exists(p)) throw IoError("missing level feature " + p.string());
    *t[i] = read_tensor(p);
  }
  return in;
}

// ---------------------------------------------------------------------------
// Segments and labels

void save_segments(const fs::path& dir, const SegmentTable& table) {
  fs::create_directories(dir);
  json segs = json::array();
  std::vector<std::uint32_t> points, offsets{0};
  std::vector<double> desc;
  // Segments without a descriptor are written as zero rows.
  std::size_t width = 0;
  for (const auto& s : table.segments) {
    if (s.weighted_sum.empty()) continue;
    if (width != 0 && width != s.weighted_sum.size()) throw ShapeError("segment descriptors differ in width");
    width = s.weighted_sum.size();
  }
  for (const auto& s : table.segments) {
    json obs = json::array();
    for (const auto& o : s.observations) obs.push_back({{"keyframe", o.keyframe}, {"mask", o.mask}, {"points", o.points}});
    json j{{"id", s.id}, {"observations", obs}, {"point_count", s.points.size()}, {"total_weight", s.total_weight}};
    if (s.label) j["label"] = *s.label;
    segs.push_back(std::move(j));
    for (auto p : s.points) points.push_back(static_cast<std::uint32_t>(p));
    offsets.push_back(static_cast<std::uint32_t>(points.size()));
    if (width == 0) continue;
    if (s.weighted_sum.empty())
      desc.insert(desc.end(), width, 0.0);
    else
      desc.insert(desc.end(), s.weighted_sum.begin(), s.weighted_sum.end());
  }
  write_json(dir / "segments.json", {{"segments", segs}, {"scene_points", table.point_segment.size()}});
  write_u32(dir / "segment_points.ovtf", points);
  write_u32(dir / "segment_offsets.ovtf", offsets);
  std::vector<std::uint32_t> owner;
  for (auto s : table.point_segment) owner.push_back(s < 0 ? kUnlabeled : static_cast<std::uint32_t>(s));
  write_u32(dir / "point_segment.ovtf", owner);
  if (width != 0) ovtf::write(dir / "segment_descriptors.ovtf", ovtf::Blob::f64({table.segments.size(), width}, desc));
}

SegmentTable load_segments(const fs::path& dir) {
  const fs::path meta = dir / "segments.json";
  const json j = read_json(meta);
  SegmentTable t;
  const auto points = read_u32(dir / "segment_points.ovtf");
  const auto offsets = read_u32(dir / "segment_offsets.ovtf");
  for (auto s : read_u32(dir / "point_segment.ovtf")) {
    t.point_segment.push_back(s == kUnlabeled ? -1 : static_cast<std::int64_t>(s));
  }
  guarded(meta, [&] {
    const auto& segs = j.at("segments");
    if (offsets.size() != segs.size() + 1) throw ShapeError("segment offsets disagree with the segment table");
    for (std::size_t i = 0; i < segs.size(); ++i) {
      Segment3D s;
      s.id = segs[i].at("id").get<std::uint32_t>();
      for (const auto& o : segs[i].at("observations")) {
        s.observations.push_back(
            {o.at("keyframe").get<std::uint32_t>(), o.at("mask").get<std::uint32_t>(), o.at("points").get<std::size_t>()});
      }
      s.total_weight = segs[i].at("total_weight").get<double>();
      if (segs[i].contains("label")) s.label = segs[i].at("label").get<std::uint32_t>();
      if (offsets[i] > offsets[i + 1] || offsets[i + 1] > points.size()) throw CorruptionError("bad segment offsets");
      s.points.assign(points.begin() + offsets[i], points.begin() + offsets[i + 1]);
      t.segments.push_back(std::move(s));
    }
    return 0;
  });
  if (fs::exists(dir / "segment_descriptors.ovtf")) {
    const Tensor d = read_tensor(dir / "segment_descriptors.ovtf");
    if (d.rows() != t.segments.size()) throw ShapeError("segment descriptors disagree with the segment table");
    for (std::size_t i = 0; i < t.segments.size(); ++i) {
      std::vector<double> row(d.vec().begin() + static_cast<std::ptrdiff_t>(i * d.cols()),
                              d.vec().begin() + static_cast<std::ptrdiff_t>((i + 1) * d.cols()));
      double norm = 0.0;
      for (double v : row) norm += v * v;
      auto& seg = t.segments[i];
      if (norm == 0.0) {
        if (seg.total_weight > 0.0) throw CorruptionError("segment " + std::to_string(i) + " has a zero descriptor");
        continue;
      }
      norm = std::sqrt(norm);
      seg.descriptor.clear();
      for (double v : row) seg.descriptor.push_back(v / norm);
      seg.weighted_sum = std::move(row);
    }
  }
  return t;
}

void save_query(const fs::path& dir, const QueryResult& q) {
  fs::create_directories(dir);
  write_u32(dir / "labels.ovtf", q.point_labels);
  write_u32(dir / "segment_labels.ovtf", q.segment_labels);
  if (!q.segment_scores.empty()) {
    std::vector<double> v;
    for (const auto& r : q.segment_scores) v.insert(v.end(), r.begin(), r.end());
    ovtf::write(dir / "segment_scores.ovtf", ovtf::Blob::f64({q.segment_scores.size(), q.classes.size()}, v));
  }
  write_json(dir / "classes.json", q.classes);
}

QueryResult load_query(const fs::path& dir) {
  QueryResult q;
  q.point_labels = read_u32(dir / "labels.ovtf");
  q.segment_labels = read_u32(dir / "segment_labels.ovtf");
  const fs::path cls = dir / "classes.json";
  q.classes = guarded(cls, [&] { return read_json(cls).get<std::vector<std::string>>(); });
  if (fs::exists(dir / "segment_scores.ovtf")) {
    const Tensor s = read_tensor(dir / "segment_scores.ovtf");
    for (std::size_t i = 0; i < s.rows(); ++i) {
      q.segment_scores.emplace_back(s.vec().begin() + static_cast<std::ptrdiff_t>(i * s.cols()),
                                    s.vec().begin() + static_cast<std::ptrdiff_t>((i + 1) * s.cols()));
    }
  }
  return q;
}

// ---------------------------------------------------------------------------
// Model and dataset

void save_model(const fs::path& dir, const FusionModel& m) {
  fs::create_directories(dir / "params");
  const auto& c = m.config();
  json names = json::array();
  for (const auto& [name, v] : m.named_parameters()) {
    names.push_back(name);
    write_tensor(dir / "params" / (name + ".ovtf"), v.value());
  }
  write_json(dir / "model.json", {{"clip_dim", c.clip_dim},
                                  {"dino_dim", c.dino_dim},
                                  {"point_dim", c.point_dim},
                                  {"use_dino", c.use_dino},
                                  {"use_point", c.use_point},
                                  {"scalar_weights", c.scalar_weights},
                                  {"attention_projections", c.attention_projections},
                                  {"init_k", c.init_k},
                                  {"init_b", c.init_b},
                                  {"init_scale", c.init_scale},
                                  {"seed", c.seed},
                                  {"parameters", names}});
}

FusionModel load_model(const fs::path& dir) {
  const fs::path meta = dir / "model.json";
  const json j = read_json(meta);
  FusionConfig c;
  const auto names = guarded(meta, [&] {
    c.clip_dim = j.at("clip_dim").get<std::size_t>();
    c.dino_dim = j.at("dino_dim").get<std::size_t>();
    c.point_dim = j.at("point_dim").get<std::size_t>();
    c.use_dino = j.at("use_dino").get<bool>();
    c.use_point = j.at("use_point").get<bool>();
    c.scalar_weights = j.at("scalar_weights").get<bool>();
    c.attention_projections = j.at("attention_projections").get<bool>();
    c.init_k = j.at("init_k").get<double>();
    c.init_b = j.at("init_b").get<double>();
    c.init_scale = j.at("init_scale").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return j.at("parameters").get<std::vector<std::string>>();
  });
  FusionModel m(c);
  for (const auto& name : names) m.param(name).assign(read_tensor(dir / "params" / (name + ".ovtf")));
  return m;
}

void save_dataset(const fs::path& dir, const OvsDataset& d) {
  d.validate();
  fs::create_directories(dir);
  write_tensor(dir / "text.ovtf", d.text);
  write_u32(dir / "labels.ovtf", d.labels);
  for (std::size_t l = 0; l < 6; ++l) {
    std::vector<double> rows;
    std::vector<std::uint32_t> offsets{0};
    std::size_t width = 0;
    for (const auto& in : d.inputs) {
      const Tensor* t[] = {&in.clip_full, &in.clip_seg, &in.clip_oseg, &in.dino_full, &in.dino_seg, &in.point};
      const Tensor& x = *t[l];
      if (width == 0) width = x.cols();
      if (x.cols() != width) throw ShapeError(std::string("dataset level ") + kLevels[l] + " changes width");
      rows.insert(rows.end(), x.vec().begin(), x.vec().end());
      offsets.push_back(offsets.back() + static_cast<std::uint32_t>(x.rows()));
    }
    if (d.inputs.empty()) continue;
    ovtf::write(dir / (std::string(kLevels[l]) + ".ovtf"), ovtf::Blob::f64({offsets.back(), width}, rows));
    write_u32(dir / (std::string(kLevels[l]) + "_offsets.ovtf"), offsets);
  }
  write_json(dir / "dataset.json", {{"classes", d.classes}, {"samples", d.inputs.size()}});
}

OvsDataset load_dataset(const fs::path& dir) {
  const fs::path meta = dir / "dataset.json";
  const json j = read_json(meta);
  OvsDataset d;
  std::size_t n = 0;
  guarded(meta, [&] {
    d.classes = j.at("classes").get<std::vector<std::string>>();
    n = j.at("samples").get<std::size_t>();
    return 0;
  });
  d.text = read_tensor(dir / "text.ovtf");
  d.labels = read_u32(dir / "labels.ovtf");
  d.inputs.resize(n);
  for (std::size_t l = 0; l < 6 && n > 0; ++l) {
    const Tensor all = read_tensor(dir / (std::string(kLevels[l]) + ".ovtf"));
    const auto off = read_u32(dir / (std::string(kLevels[l]) + "_offsets.ovtf"));
    if (off.size() != n + 1 || off.back() != all.rows()) throw CorruptionError(std::string("bad offsets for ") + kLevels[l]);
    const std::size_t w = all.cols();
    for (std::size_t i = 0; i < n; ++i) {
      if (off[i] >= off[i + 1]) throw CorruptionError(std::string("empty sample in level ") + kLevels[l]);
      std::vector<double> v(all.vec().begin() + static_cast<std::ptrdiff_t>(off[i] * w),
                            all.vec().begin() + static_cast<std::ptrdiff_t>(off[i + 1] * w));
      Tensor t({off[i + 1] - off[i], w}, std::move(v));
      LevelInputs& in = d.inputs[i];
      Tensor* dst[] = {&in.clip_full, &in.clip_seg, &in.clip_oseg, &in.dino_full, &in.dino_seg, &in.point};
      *dst[l] = std::move(t);
    }
  }
  d.validate();
  return d;
}

void write_loss_trace(const fs::path& path, const std::vector<double>& trace) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) out << i + 1 << "," << trace[i] << "\n";
  write_text(path, out.str());
}

// ---------------------------------------------------------------------------
// Reports

std::string to_json(const MetricReport& r) {
  json j = json::object();
  if (r.reconstruction) {
    j["reconstruction"] = {{"accuracy_cm", r.reconstruction->accuracy_cm},
                           {"completion_cm", r.reconstruction->completion_cm},
                           {"distance_cap_m", r.distance_cap_m ? json(*r.distance_cap_m) : json(nullptr)}};
  }
  j["alignment"] = to_string(r.alignment);
  if (r.cloud_alignment) j["cloud_alignment"] = sim3_json(*r.cloud_alignment);
  if (r.ate) j["ate"] = {{"rmse_cm", r.ate->rmse_cm}, {"pairs", r.ate->pairs}, {"transform", sim3_json(r.ate->alignment)}};
  if (r.semantic) {
    json per = json::array();
    json excluded = json::array();
    for (const auto& c : r.semantic->per_class) {
      const std::string name = c.cls < r.classes.size() ? r.classes[c.cls] : std::to_string(c.cls);
      per.push_back({{"class", c.cls}, {"name", name}, {"iou", c.iou}, {"acc", c.acc}, {"gt_count", c.gt_count},
                     {"present", c.present}});
      if (!c.present) excluded.push_back(name);
    }
    j["semantic"] = {{"miou", r.semantic->miou},
                     {"macc", r.semantic->macc},
                     {"evaluated_points", r.semantic->evaluated_points},
                     {"excluded_absent_classes", excluded},
                     {"per_class", per}};
  }
  if (r.weighted) j["weighted"] = {{"f_miou", r.weighted->f_miou}, {"f_macc", r.weighted->f_macc}};
  return j.dump(2) + "\n";
}

std::string per_class_csv(const MetricReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "class,name,iou,acc,gt_count,present\n";
  if (!r.semantic) return out.str();
  for (const auto& c : r.semantic->per_class) {
    const std::string name = c.cls < r.classes.size() ? r.classes[c.cls] : std::to_string(c.cls);
    out << c.cls << "," << name << "," << c.iou << "," << c.acc << "," << c.gt_count << "," << (c.present ? 1 : 0)
        << "\n";
  }
  return out.str();
}

std::string reconstruction_report(const SceneState& state, const WindowConfig& cfg) {
  std::size_t pnp = 0;
  for (const auto& k : state.keyframes) pnp += k.pose_source == PoseSource::pnp ? 1 : 0;
  json j{{"frames_processed", state.frames_processed},
         {"keyframes", state.keyframes.size()},
         {"points", state.world_points.size()},
         {"seconds", state.seconds},
         {"frames_per_second", state.frames_per_second()},
         {"stride", state.stride},
         {"window", window_json(cfg)},
         {"pose_sources", {{"pnp", pnp}, {"registration", state.keyframes.size() - pnp}}}};
  return j.dump(2) + "\n";
}

}  // namespace ov3r::io
