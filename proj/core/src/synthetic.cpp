#include "ov3r/synthetic.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <set>

#include "ov3r/errors.hpp"
#include "ov3r/metrics.hpp"

namespace ov3r::synth {

namespace {

constexpr std::uint32_t kMiss = std::numeric_limits<std::uint32_t>::max();

// Entry and exit ray parameters of an axis-aligned box, with the axis and
// side of the exit face (side 0 = low face).
struct SlabHit {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int exit_axis = 0;
  int exit_side = 0;
};

std::optional<SlabHit> slab(const Vec3& o, const Vec3& d, const Vec3& lo, const Vec3& hi) {
  SlabHit h;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
      continue;
    }
    double t0 = (lo[a] - o[a]) / d[a], t1 = (hi[a] - o[a]) / d[a];
    int far_side = 1;
    if (t0 > t1) {
      std::swap(t0, t1);
      far_side = 0;
    }
    h.t_near = std::max(h.t_near, t0);
    if (t1 < h.t_far) {
      h.t_far = t1;
      h.exit_axis = a;
      h.exit_side = far_side;
    }
  }
  if (h.t_near > h.t_far) return std::nullopt;
  return h;
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

struct Grid {
  std::size_t gx, gy;
  std::size_t x0(std::size_t i, std::size_t w) const { return i * w / gx; }
  std::size_t y0(std::size_t j, std::size_t h) const { return j * h / gy; }
};

Grid grid_for(const Image& img) { return {std::min<std::size_t>(2, img.width), std::min<std::size_t>(2, img.height)}; }

}  // namespace

std::array<double, 3> object_color(std::uint32_t object) {
  const double i = static_cast<double>(object % 96 + 1);
  return {std::fmod(37.0 * i, 101.0) / 101.0, std::fmod(59.0 * i, 103.0) / 103.0, std::fmod(83.0 * i, 107.0) / 107.0};
}

Pose look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 f = (target - eye).normalized();
  const Vec3 r = f.cross(Vec3::UnitZ()).normalized();
  const Vec3 d = f.cross(r);
  Mat3 rot;
  rot.col(0) = r;
  rot.col(1) = d;
  rot.col(2) = f;
  return Pose(rot, eye);
}

View render(const std::vector<Box>& boxes, const Box* room, const std::vector<std::array<double, 3>>& colors,
            std::uint32_t id, const Pose& camera_to_world, const Intrinsics& k) {
  k.validate();
  View v;
  v.id = id;
  v.camera_to_world = camera_to_world;
  v.intrinsics = k;
  v.world_map = PointMap::blank(k.width, k.height, FrameKind::world);
  v.object.assign(k.width * k.height, kMiss);
  v.image = Image::blank(k.width, k.height);
  const Vec3 o = camera_to_world.translation;
  for (std::size_t y = 0; y < k.height; ++y)
    for (std::size_t x = 0; x < k.width; ++x) {
      const Vec3 dc((static_cast<double>(x) - k.cx) / k.fx, (static_cast<double>(y) - k.cy) / k.fy, 1.0);
      const Vec3 d = camera_to_world.rotation * dc;
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t obj = kMiss;
      for (const auto& b : boxes) {
        const auto h = slab(o, d, b.lo, b.hi);
        if (h && h->t_near > 1e-9 && h->t_near < best) {
          best = h->t_near;
          obj = b.object;
        }
      }
      if (room) {
        const auto h = slab(o, d, room->lo, room->hi);
        if (h && h->t_far > 1e-9 && h->t_far < best) {
          best = h->t_far;
          // faces: floor, x-, x+, y-, y+, ceiling
          static constexpr std::uint32_t face[3][2] = {{1, 2}, {3, 4}, {0, 5}};
          obj = room->object + face[h->exit_axis][h->exit_side];
        }
      }
      if (obj == kMiss) continue;
      const std::size_t p = y * k.width + x;
      v.world_map.coords[p] = o + best * d;
      v.world_map.valid[p] = 1;
      v.object[p] = obj;
      const auto& c = colors.at(obj);
      for (std::size_t ch = 0; ch < 3; ++ch) v.image.at(x, y, ch) = c[ch];
    }
  return v;
}

Scene make_room(const RoomConfig& cfg) {
  if (cfg.frames == 0) throw ContractError("room needs at least one frame");
  Scene s;
  s.classes = {"floor", "wall", "ceiling", "table", "chair", "cabinet", "sofa"};
  s.object_class = {0, 1, 1, 1, 1, 2, 3, 4, 5, 6};
  for (std::uint32_t i = 0; i < s.object_class.size(); ++i) s.object_color.push_back(object_color(i));

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  auto box = [&](Vec3 lo, Vec3 hi, std::uint32_t obj) {
    const Vec3 shift(jitter(rng), jitter(rng), 0.0);
    return Box{lo + shift, hi + shift, obj};
  };
  const std::vector<Box> boxes{
      box({-0.7, -0.5, 0.0}, {-0.1, 0.3, 0.75}, 6),
      box({0.2, -0.6, 0.0}, {0.6, -0.2, 0.9}, 7),
      box({0.3, 0.3, 0.0}, {0.8, 0.7, 1.2}, 8),
      box({-0.6, 0.45, 0.0}, {0.1, 0.8, 0.5}, 9),
  };
  const Box room{{-2.5, -2.0, 0.0}, {2.5, 2.0, 2.6}, 0};
  const Intrinsics k{cfg.focal, cfg.focal, (static_cast<double>(cfg.width) - 1.0) / 2.0,
                     (static_cast<double>(cfg.height) - 1.0) / 2.0, cfg.width, cfg.height};
  for (std::size_t i = 0; i < cfg.frames; ++i) {
    const double th = cfg.sweep * static_cast<double>(i) / static_cast<double>(cfg.frames);
    const Vec3 eye(cfg.radius * std::cos(th), cfg.radius * std::sin(th), cfg.camera_height);
    s.views.push_back(render(boxes, &room, s.object_color, static_cast<std::uint32_t>(i), look_at(eye, {0, 0, 0.4}), k));
  }
  return s;
}

Scene make_two_boxes(std::size_t views, std::size_t width, std::size_t height, double focal) {
  if (views == 0) throw ContractError("two-box scene needs at least one view");
  Scene s;
  s.classes = {"crate", "bin"};
  s.object_class = {0, 1};
  s.object_color = {object_color(0), object_color(1)};
  const std::vector<Box> boxes{{{-0.5, -0.2, -0.2}, {-0.1, 0.2, 0.2}, 0}, {{0.1, -0.2, -0.1}, {0.5, 0.2, 0.3}, 1}};
  const Intrinsics k{focal, focal, (static_cast<double>(width) - 1.0) / 2.0, (static_cast<double>(height) - 1.0) / 2.0,
                     width, height};
  for (std::size_t i = 0; i < views; ++i) {
    const double th = views == 1 ? 0.0 : -0.4 + 0.8 * static_cast<double>(i) / static_cast<double>(views - 1);
    const Vec3 eye(2.0 * std::sin(th), -2.0 * std::cos(th), 0.8);
    s.views.push_back(render(boxes, nullptr, s.object_color, static_cast<std::uint32_t>(i), look_at(eye, {0, 0, 0}), k));
  }
  return s;
}

MaskSet object_masks(const View& view, std::vector<std::uint32_t>* objects) {
  std::set<std::uint32_t> present;
  for (auto o : view.object)
    if (o != kMiss) present.insert(o);
  MaskSet m{view.world_map.width, view.world_map.height, {}};
  for (auto o : present) {
    Mask mask(view.object.size(), 0);
    for (std::size_t p = 0; p < mask.size(); ++p) mask[p] = view.object[p] == o ? 1 : 0;
    m.masks.push_back(std::move(mask));
  }
  if (objects) objects->assign(present.begin(), present.end());
  return m;
}

std::vector<std::uint32_t> pixel_classes(const Scene& scene, const View& view) {
  std::vector<std::uint32_t> out(view.object.size(), kUnlabeled);
  for (std::size_t p = 0; p < out.size(); ++p)
    if (view.object[p] != kMiss) out[p] = scene.object_class.at(view.object[p]);
  return out;
}

Tensor text_embeddings(std::size_t classes, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(classes * dim);
  for (auto& x : v) x = n(rng);
  return normalize_rows(Tensor({classes, dim}, std::move(v)));
}

Providers::Providers(const Scene& scene, Tensor text, std::size_t dino_dim, std::size_t point_dim, double noise,
                     std::uint64_t seed)
    : text_(std::move(text)), dino_dim_(dino_dim), point_dim_(point_dim), noise_(noise), seed_(seed) {
  if (text_.rows() < scene.classes.size()) throw ContractError("fewer text embeddings than scene classes");
  for (std::size_t o = 0; o < scene.object_color.size(); ++o) color_class_[scene.object_color[o]] = scene.object_class.at(o);
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> p(4 * dino_dim);
  for (auto& x : p) x = n(rng);
  dino_proj_ = Tensor({4, dino_dim}, std::move(p));
}

Tensor Providers::clip(const Image& image) {
  image.validate();
  const Grid g = grid_for(image);
  const std::size_t d = text_.cols(), c = text_.rows();
  std::vector<double> out;
  for (std::size_t j = 0; j < g.gy; ++j)
    for (std::size_t i = 0; i < g.gx; ++i) {
      std::vector<double> count(c, 0.0);
      double total = 0.0;
      std::uint64_t h = fnv1a(&seed_, sizeof(seed_));
      for (std::size_t y = g.y0(j, image.height); y < g.y0(j + 1, image.height); ++y)
        for (std::size_t x = g.x0(i, image.width); x < g.x0(i + 1, image.width); ++x) {
          const std::array<double, 3> col{image.at(x, y, 0), image.at(x, y, 1), image.at(x, y, 2)};
          h = fnv1a(col.data(), sizeof(col), h);
          const auto it = color_class_.find(col);
          if (it == color_class_.end()) continue;
          count[it->second] += 1.0;
          total += 1.0;
        }
      std::mt19937_64 rng(h);
      std::normal_distribution<double> n(0.0, 1.0);
      for (std::size_t k = 0; k < d; ++k) {
        double v = 0.0;
        if (total > 0.0)
          for (std::size_t cl = 0; cl < c; ++cl) v += count[cl] / total * text_.vec()[cl * d + k];
        out.push_back(v + noise_ * n(rng));
      }
    }
  return Tensor({g.gx * g.gy, d}, std::move(out));
}

Tensor Providers::dino(const Image& image) {
  image.validate();
  const Grid g = grid_for(image);
  std::vector<double> rows;
  for (std::size_t j = 0; j < g.gy; ++j)
    for (std::size_t i = 0; i < g.gx; ++i) {
      std::array<double, 4> m{0.0, 0.0, 0.0, 1.0};
      double n = 0.0;
      for (std::size_t y = g.y0(j, image.height); y < g.y0(j + 1, image.height); ++y)
        for (std::size_t x = g.x0(i, image.width); x < g.x0(i + 1, image.width); ++x) {
          for (std::size_t ch = 0; ch < 3; ++ch) m[ch] += image.at(x, y, ch);
          n += 1.0;
        }
      for (std::size_t ch = 0; ch < 3; ++ch) m[ch] /= n;
      rows.insert(rows.end(), m.begin(), m.end());
    }
  return matmul(Tensor({g.gx * g.gy, 4}, std::move(rows)), dino_proj_);
}

Tensor Providers::point(std::span<const Vec3> points) {
  std::vector<double> stats(point_dim_, 0.0);
  if (points.empty()) return Tensor({1, point_dim_}, std::move(stats));
  Vec3 mean = Vec3::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) cov += (p - mean) * (p - mean).transpose();
  cov /= static_cast<double>(points.size());
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  std::vector<double> s;
  for (int a = 2; a >= 0; --a) s.push_back(std::sqrt(std::max(0.0, es.eigenvalues()[a])));
  for (int a = 2; a >= 0; --a) {
    const Vec3 axis = es.eigenvectors().col(a);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& p : points) {
      const double t = axis.dot(p - mean);
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
    s.push_back(hi - lo);
  }
  s.push_back(std::log1p(static_cast<double>(points.size())) / 10.0);
  s.push_back(1.0);
  for (std::size_t i = 0; i < point_dim_ && i < s.size(); ++i) stats[i] = s[i];
  return Tensor({1, point_dim_}, std::move(stats));
}

std::vector<FrameInfo> frame_infos(const Scene& scene) {
  std::vector<FrameInfo> out;
  for (const auto& v : scene.views) out.push_back({v.id, v.intrinsics});
  return out;
}

SceneState oracle_state(const Scene& scene, const std::vector<std::uint32_t>& views) {
  SceneState s;
  for (const auto& v : scene.views) {
    if (!views.empty() && std::find(views.begin(), views.end(), v.id) == views.end()) continue;
    KeyframeRecord r;
    r.frame = v.id;
    r.world_map = v.world_map;
    r.world_map.keyframe = v.id;
    r.camera_to_world = v.camera_to_world;
    r.local_to_world = Sim3(v.camera_to_world);
    r.intrinsics = v.intrinsics;
    r.point_offset = s.world_points.size();
    for (std::size_t p = 0; p < v.world_map.pixel_count(); ++p) {
      if (!v.world_map.valid[p]) continue;
      s.world_points.push_back(v.world_map.coords[p]);
      s.confidences.push_back(v.world_map.confidence[p]);
    }
    s.trajectory.push_back({v.id, v.camera_to_world});
    s.keyframes.push_back(std::move(r));
    s.frames_processed = v.id + 1;
  }
  return s;
}

std::vector<GroundTruthFrame> ground_truth(const Scene& scene, Providers* providers) {
  std::vector<GroundTruthFrame> out;
  for (const auto& v : scene.views) {
    GroundTruthFrame g;
    g.id = v.id;
    g.world_map = v.world_map;
    g.camera_to_world = v.camera_to_world;
    if (providers) {
      g.features = providers->clip(v.image);
      g.has_features = true;
    }
    out.push_back(std::move(g));
  }
  return out;
}

OvsDataset view_dataset(const Scene& scene, Providers& providers, const std::vector<std::uint32_t>& views) {
  OvsDataset ds;
  ds.text = providers.text();
  ds.classes = scene.classes;
  if (ds.text.rows() != ds.classes.size()) {
    ds.text = Tensor({ds.classes.size(), ds.text.cols()},
                     std::vector<double>(ds.text.vec().begin(),
                                         ds.text.vec().begin() + static_cast<std::ptrdiff_t>(ds.classes.size() * ds.text.cols())));
  }
  for (const auto& v : scene.views) {
    if (!views.empty() && std::find(views.begin(), views.end(), v.id) == views.end()) continue;
    std::vector<std::uint32_t> objects;
    const MaskSet masks = object_masks(v, &objects);
    for (std::size_t m = 0; m < masks.size(); ++m) {
      ds.inputs.push_back(build_levels(v.image, masks.masks[m], v.world_map, providers));
      ds.labels.push_back(scene.object_class.at(objects[m]));
    }
  }
  return ds;
}

OvsDataset separable_dataset(const SeparableConfig& cfg) {
  if (cfg.classes < 2 || cfg.dim == 0 || cfg.tokens == 0) throw ContractError("separable dataset needs >= 2 classes");
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> n(0.0, 1.0);
  OvsDataset ds;
  ds.text = text_embeddings(cfg.classes, cfg.dim, cfg.seed + 1);
  for (std::size_t c = 0; c < cfg.classes; ++c) ds.classes.push_back("class_" + std::to_string(c));
  auto randn = [&](std::size_t len) {
    std::vector<double> v(len);
    for (auto& x : v) x = n(rng);
    return v;
  };
  std::vector<std::vector<double>> dino_mean, point_mean;
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    dino_mean.push_back(randn(cfg.dino_dim));
    point_mean.push_back(randn(cfg.point_dim));
  }
  const double sd = cfg.noise / std::sqrt(static_cast<double>(cfg.dim));
  std::uniform_int_distribution<std::size_t> other(0, cfg.classes - 1);
  auto clip_level = [&](std::size_t c, double own) {
    std::vector<double> v;
    for (std::size_t t = 0; t < cfg.tokens; ++t) {
      const std::size_t o = other(rng);
      for (std::size_t k = 0; k < cfg.dim; ++k) {
        v.push_back(own * ds.text.vec()[c * cfg.dim + k] + (1.0 - own) * ds.text.vec()[o * cfg.dim + k] + sd * n(rng));
      }
    }
    return Tensor({cfg.tokens, cfg.dim}, std::move(v));
  };
  auto around = [&](const std::vector<double>& mean, std::size_t rows) {
    std::vector<double> v;
    for (std::size_t t = 0; t < rows; ++t)
      for (double m : mean) v.push_back(m + cfg.noise * n(rng));
    return Tensor({rows, mean.size()}, std::move(v));
  };
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    const std::size_t c = i % cfg.classes;
    LevelInputs in;
    in.clip_full = clip_level(c, 0.5);
    in.clip_seg = clip_level(c, 1.0);
    in.clip_oseg = clip_level(c, 1.0);
    in.dino_full = around(dino_mean[c], cfg.tokens);
    in.dino_seg = around(dino_mean[c], cfg.tokens);
    in.point = around(point_mean[c], 1);
    ds.inputs.push_back(std::move(in));
    ds.labels.push_back(static_cast<std::uint32_t>(c));
  }
  return ds;
}

}  // namespace ov3r::synth
