#include "ov3r/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "ov3r/errors.hpp"
#include "ov3r/pnp.hpp"

namespace ov3r {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<double> retrieval_key(const WindowPrediction& prediction, std::size_t index) {
  if (prediction.features.size() <= index) return {};
  const Tensor pooled = mean_rows(prediction.features[index]);
  return pooled.vec();
}

}  // namespace

void WindowConfig::validate() const {
  if (init_length == 0 || incremental_length == 0) throw ContractError("window lengths must be positive");
  if (init_length % 2 == 0 || incremental_length % 2 == 0) {
    throw ContractError("window lengths must be odd so that a central keyframe exists");
  }
  if (retrieval_k == 0) throw ContractError("retrieval_k must be positive");
  if (reservoir_capacity == 0) throw ContractError("reservoir capacity must be positive");
}

std::size_t WindowConfig::effective_stride() const {
  if (stride != 0) return stride;
  return std::max<std::size_t>(1, (incremental_length - 1) / 2);
}

std::vector<WindowRequest> keyframe_schedule(const std::vector<FrameInfo>& frames, const WindowConfig& cfg) {
  cfg.validate();
  const std::size_t n = frames.size();
  if (n < cfg.init_length) {
    throw ContractError("stream has " + std::to_string(n) + " frames but the initial window needs " +
                        std::to_string(cfg.init_length));
  }
  const std::size_t half = cfg.incremental_length / 2;
  auto window = [&](std::size_t begin, std::size_t end, std::size_t center) {
    WindowRequest w;
    for (std::size_t i = begin; i <= end; ++i) w.frames.push_back(frames[i].id);
    w.keyframe_index = center - begin;
    return w;
  };
  std::vector<WindowRequest> out;
  std::size_t center = cfg.init_length / 2;
  std::size_t last_end = cfg.init_length - 1;
  out.push_back(window(0, last_end, center));
  const std::size_t stride = cfg.effective_stride();
  for (std::size_t c = center + stride; c + half <= n - 1; c += stride) {
    out.push_back(window(c >= half ? c - half : 0, c + half, c));
    center = c;
    last_end = c + half;
  }
  if (last_end < n - 1) {
    const std::size_t c = std::max(center + 1, n - 1 >= half ? n - 1 - half : 0);
    out.push_back(window(c >= half ? c - half : 0, n - 1, c));
  }
  return out;
}

std::vector<std::int64_t> KeyframeRecord::pixel_to_point() const {
  std::vector<std::int64_t> out(world_map.pixel_count(), -1);
  std::int64_t next = static_cast<std::int64_t>(point_offset);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (world_map.valid[i]) out[i] = next++;
  return out;
}

const KeyframeRecord* SceneState::find_keyframe(std::uint32_t frame) const {
  for (const auto& k : keyframes)
    if (k.frame == frame) return &k;
  return nullptr;
}

std::vector<std::uint32_t> correlated_keyframes(const SceneState& state, std::span<const double> query,
                                                std::size_t k) {
  std::vector<std::uint32_t> out;
  if (state.reservoir.size() > 0) out = state.reservoir.retrieve(query, k);
  if (!state.keyframes.empty()) {
    const auto recent = state.keyframes.back().frame;
    if (std::find(out.begin(), out.end(), recent) == out.end()) out.push_back(recent);
  }
  return out;
}

Registration register_local_to_world(const WindowRequest& request, const WindowPrediction& prediction,
                                     const SceneState& state, std::span<const std::uint32_t> candidates) {
  if (prediction.pointmaps.size() != request.frames.size()) {
    throw ContractError("registration: prediction has " + std::to_string(prediction.pointmaps.size()) +
                        " pointmaps for a window of " + std::to_string(request.frames.size()));
  }
  const PointMap& local = prediction.pointmaps[request.keyframe_index];
  Registration reg;
  if (state.keyframes.empty()) {
    reg.world_map = local.transformed(reg.local_to_world, FrameKind::world);
    return reg;
  }

  std::vector<Vec3> src, dst;
  std::vector<double> weights;
  for (auto id : candidates) {
    const auto it = std::find(request.frames.begin(), request.frames.end(), id);
    if (it == request.frames.end()) continue;
    const KeyframeRecord* stored = state.find_keyframe(id);
    if (!stored) continue;
    const PointMap& here = prediction.pointmaps[static_cast<std::size_t>(it - request.frames.begin())];
    const PointMap& there = stored->world_map;
    if (here.width != there.width || here.height != there.height) {
      throw ShapeError("registration: pointmap size differs for frame " + std::to_string(id));
    }
    std::size_t used = 0;
    for (std::size_t p = 0; p < here.pixel_count(); ++p) {
      if (!here.valid[p] || !there.valid[p]) continue;
      src.push_back(here.coords[p]);
      dst.push_back(there.coords[p]);
      weights.push_back(here.confidence[p] * there.confidence[p]);
      ++used;
    }
    if (used > 0) reg.used_keyframes.push_back(id);
  }
  reg.overlap = src.size();
  if (reg.overlap < 3) {
    throw RegistrationFailure("registration of keyframe " + std::to_string(request.keyframe()) + " found " +
                                  std::to_string(reg.overlap) + " covisible correspondences (need 3)",
                              reg.overlap);
  }
  double total = 0.0;
  for (double w : weights) total += w;
  for (double& w : weights) w /= total;
  try {
    reg.local_to_world = umeyama_align(src, dst, true, weights);
  } catch (const DegeneracyError& e) {
    throw RegistrationFailure(std::string("registration degenerate: ") + e.what(), reg.overlap);
  }
  reg.world_map = local.transformed(reg.local_to_world, FrameKind::world);
  return reg;
}

namespace {

std::optional<Pose> pnp_camera_pose(const PointMap& world_map, const Intrinsics& k, const WindowConfig& cfg,
                                    std::uint32_t keyframe) {
  const auto valid = world_map.valid_indices();
  if (valid.size() < 6) return std::nullopt;
  const std::size_t step = std::max<std::size_t>(1, (valid.size() + cfg.pnp_max_points - 1) / cfg.pnp_max_points);
  std::vector<Correspondence> corr;
  for (std::size_t i = 0; i < valid.size(); i += step) {
    const auto p = valid[i];
    corr.push_back({world_map.coords[p], Vec2(static_cast<double>(p % world_map.width),
                                              static_cast<double>(p / world_map.width))});
  }
  try {
    PnpOptions opt;
    opt.seed = splitmix64(cfg.seed ^ keyframe);
    return pnp_ransac(corr, k, opt).pose.inverse();
  } catch (const NumericError&) {
    return std::nullopt;
  } catch (const ContractError&) {
    return std::nullopt;
  }
}

}  // namespace

SceneState run_stream(const std::vector<FrameInfo>& frames, PointmapPredictor& predictor, const WindowConfig& cfg) {
  const auto schedule = keyframe_schedule(frames, cfg);
  const auto start = std::chrono::steady_clock::now();

  SceneState state;
  state.reservoir = Reservoir(cfg.reservoir_capacity);
  state.stride = cfg.effective_stride();
  std::mt19937_64 rng(cfg.seed);

  std::size_t frame_cursor = 0;
  for (const auto& request : schedule) {
    const auto kf = request.keyframe();
    WindowPrediction prediction;
    try {
      prediction = predictor.predict(request);
      if (prediction.pointmaps.size() != request.frames.size()) {
        throw ContractError("predictor returned " + std::to_string(prediction.pointmaps.size()) +
                            " pointmaps for " + std::to_string(request.frames.size()) + " frames");
      }
      for (const auto& pm : prediction.pointmaps) pm.validate();
    } catch (const Error& e) {
      throw PipelineError("predictor failed on the window of keyframe " + std::to_string(kf) + ": " + e.what(), kf);
    } catch (const std::exception& e) {
      throw PipelineError("predictor failed on the window of keyframe " + std::to_string(kf) + ": " + e.what(), kf);
    }

    const auto key = retrieval_key(prediction, request.keyframe_index);
    const auto candidates = correlated_keyframes(state, key, cfg.retrieval_k);
    Registration reg = register_local_to_world(request, prediction, state, candidates);

    KeyframeRecord rec;
    rec.frame = kf;
    rec.local_to_world = reg.local_to_world;
    rec.world_map = std::move(reg.world_map);
    rec.world_map.keyframe = kf;
    rec.registered_against = std::move(reg.used_keyframes);
    rec.overlap = reg.overlap;
    for (const auto& f : frames)
      if (f.id == kf) rec.intrinsics = f.intrinsics;

    rec.camera_to_world = Pose(reg.local_to_world.rotation, reg.local_to_world.translation);
    rec.pose_source = PoseSource::registration;
    if (cfg.pnp_poses && rec.intrinsics) {
      if (auto pose = pnp_camera_pose(rec.world_map, *rec.intrinsics, cfg, kf)) {
        rec.camera_to_world = *pose;
        rec.pose_source = PoseSource::pnp;
      }
    }

    rec.point_offset = state.world_points.size();
    Vec3 centroid = Vec3::Zero();
    std::size_t count = 0;
    for (std::size_t p = 0; p < rec.world_map.pixel_count(); ++p) {
      if (!rec.world_map.valid[p]) continue;
      state.world_points.push_back(rec.world_map.coords[p]);
      state.confidences.push_back(rec.world_map.confidence[p]);
      centroid += rec.world_map.coords[p];
      ++count;
    }
    if (count > 0) centroid /= static_cast<double>(count);

    state.trajectory.push_back({kf, rec.camera_to_world});
    state.reservoir.update({kf, centroid, count, key}, rng);
    state.keyframes.push_back(std::move(rec));

    for (std::size_t i = frame_cursor; i < frames.size(); ++i) {
      if (frames[i].id == request.frames.back()) {
        frame_cursor = i + 1;
        break;
      }
    }
    state.frames_processed = frame_cursor;
  }
  state.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return state;
}

OraclePredictor::OraclePredictor(std::vector<GroundTruthFrame> frames, double noise_sigma, std::uint64_t seed)
    : frames_(std::move(frames)), sigma_(noise_sigma), seed_(seed) {
  if (!(noise_sigma >= 0.0)) throw ContractError("oracle noise sigma must be non-negative");
}

const GroundTruthFrame& OraclePredictor::frame(std::uint32_t id) const {
  for (const auto& f : frames_)
    if (f.id == id) return f;
  throw ContractError("oracle predictor has no ground truth for frame " + std::to_string(id));
}

WindowPrediction OraclePredictor::predict(const WindowRequest& request) {
  const auto kf = request.keyframe();
  const Pose world_to_kf = frame(kf).camera_to_world.inverse();
  WindowPrediction out;
  for (auto id : request.frames) {
    const auto& gt = frame(id);
    PointMap local = gt.world_map.transformed(Sim3(world_to_kf), FrameKind::local);
    local.keyframe = kf;
    if (sigma_ > 0.0) {
      std::mt19937_64 rng(splitmix64(seed_ ^ splitmix64((static_cast<std::uint64_t>(kf) << 32) | id)));
      std::normal_distribution<double> noise(0.0, sigma_);
      for (std::size_t p = 0; p < local.pixel_count(); ++p) {
        if (!local.valid[p]) continue;
        local.coords[p] += Vec3(noise(rng), noise(rng), noise(rng));
      }
    }
    for (std::size_t p = 0; p < local.pixel_count(); ++p) local.confidence[p] = 1.0;
    out.pointmaps.push_back(std::move(local));
    if (gt.has_features) out.features.push_back(gt.features);
  }
  if (out.features.size() != out.pointmaps.size()) out.features.clear();
  return out;
}

std::string to_string(PoseSource s) { return s == PoseSource::pnp ? "pnp" : "registration"; }

}  // namespace ov3r
