#include "ov3r/ovs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ov3r/errors.hpp"

namespace ov3r {

// ---------------------------------------------------------------------------
// Segments

SegmentTable match_segments(const SceneState& state, const std::map<std::uint32_t, MaskSet>& masks,
                            const MatchOptions& options) {
  for (const auto& [kf, set] : masks) {
    if (!state.find_keyframe(kf)) {
      throw ContractError("masks given for frame " + std::to_string(kf) + ", which is not a registered keyframe");
    }
  }
  if (!(options.iou_threshold >= 0.0 && options.iou_threshold <= 1.0)) {
    throw ContractError("IoU threshold must lie in [0, 1]");
  }

  SegmentTable table;
  table.point_segment.assign(state.world_points.size(), -1);

  for (const auto& rec : state.keyframes) {
    const auto it = masks.find(rec.frame);
    if (it == masks.end()) continue;
    const MaskSet& set = it->second;
    set.validate();
    const PointMap& map = rec.world_map;
    if (set.width != map.width || set.height != map.height) {
      throw ShapeError("masks of keyframe " + std::to_string(rec.frame) + " do not match its pointmap size");
    }
    const auto pix2pt = rec.pixel_to_point();
    const std::size_t npix = map.pixel_count();

    // Visible projections of the segments built so far: unique (pixel, segment) pairs.
    std::vector<std::pair<std::size_t, std::uint32_t>> hits;
    if (!table.segments.empty()) {
      if (!rec.intrinsics) {
        throw ContractError("keyframe " + std::to_string(rec.frame) + " has no intrinsics for segment projection");
      }
      const Intrinsics& k = *rec.intrinsics;
      const Pose w2c = rec.camera_to_world.inverse();
      std::vector<double> depth(npix, 0.0);
      for (std::size_t p = 0; p < npix; ++p)
        if (map.valid[p]) depth[p] = w2c.apply(map.coords[p]).z();
      for (std::size_t i = 0; i < table.point_segment.size(); ++i) {
        const auto seg = table.point_segment[i];
        if (seg < 0) continue;
        const Vec3 c = w2c.apply(state.world_points[i]);
        if (!(c.z() > 0.0)) continue;
        const double u = std::round(k.fx * c.x() / c.z() + k.cx);
        const double v = std::round(k.fy * c.y() / c.z() + k.cy);
        if (u < 0.0 || v < 0.0 || u >= static_cast<double>(map.width) || v >= static_cast<double>(map.height)) continue;
        const std::size_t p = map.index(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
        if (!map.valid[p] || std::abs(c.z() - depth[p]) > options.depth_tolerance * std::abs(depth[p])) continue;
        hits.emplace_back(p, static_cast<std::uint32_t>(seg));
      }
      std::sort(hits.begin(), hits.end());
      hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
    }
    const std::size_t nseg = table.segments.size();
    std::vector<std::size_t> area(nseg, 0);
    for (const auto& h : hits) ++area[h.second];

    std::vector<std::uint8_t> taken(npix, 0);
    for (std::size_t m = 0; m < set.masks.size(); ++m) {
      const Mask& mask = set.masks[m];
      std::vector<std::size_t> claimed;
      std::size_t mask_area = 0;
      for (std::size_t p = 0; p < npix; ++p) {
        if (!mask[p] || !map.valid[p]) continue;
        ++mask_area;
        if (!taken[p]) {
          taken[p] = 1;
          claimed.push_back(static_cast<std::size_t>(pix2pt[p]));
        }
      }
      if (claimed.empty()) continue;

      std::vector<std::size_t> inter(nseg, 0);
      for (const auto& h : hits)
        if (mask[h.first]) ++inter[h.second];
      std::optional<std::uint32_t> best;
      double best_iou = options.iou_threshold;
      for (std::uint32_t s = 0; s < nseg; ++s) {
        if (inter[s] == 0) continue;
        const double iou =
            static_cast<double>(inter[s]) / static_cast<double>(mask_area + area[s] - inter[s]);
        if (iou > best_iou) {
          best_iou = iou;
          best = s;
        }
      }

      std::uint32_t target;
      if (best) {
        target = *best;
      } else {
        target = static_cast<std::uint32_t>(table.segments.size());
        Segment3D seg;
        seg.id = target;
        table.segments.push_back(std::move(seg));
      }
      Segment3D& seg = table.segments[target];
      for (auto pt : claimed) {
        seg.points.push_back(pt);
        table.point_segment[pt] = target;
      }
      seg.observations.push_back({rec.frame, static_cast<std::uint32_t>(m), claimed.size()});
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Level inputs

Image Image::blank(std::size_t width, std::size_t height, std::size_t channels) {
  return {width, height, channels, std::vector<double>(width * height * channels, 0.0)};
}

void Image::validate() const {
  if (width == 0 || height == 0 || channels == 0) throw ShapeError("image has an empty extent");
  if (data.size() != width * height * channels) throw ShapeError("image data size disagrees with its extent");
}

Crops make_crops(const Image& frame, const Mask& mask, const PointMap& pointmap) {
  frame.validate();
  if (mask.size() != frame.width * frame.height) throw ShapeError("mask does not match the frame size");
  if (pointmap.width != frame.width || pointmap.height != frame.height) {
    throw ShapeError("pointmap does not match the frame size");
  }
  std::size_t x0 = frame.width, y0 = frame.height, x1 = 0, y1 = 0;
  bool any = false;
  for (std::size_t y = 0; y < frame.height; ++y)
    for (std::size_t x = 0; x < frame.width; ++x) {
      if (!mask[y * frame.width + x]) continue;
      any = true;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  if (!any) throw ContractError("cannot crop an empty mask");

  Crops c;
  c.x0 = x0;
  c.y0 = y0;
  const std::size_t w = x1 - x0 + 1, h = y1 - y0 + 1;
  c.seg = Image::blank(w, h, frame.channels);
  c.oseg = Image::blank(w, h, frame.channels);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = (y0 + y) * frame.width + (x0 + x);
      for (std::size_t ch = 0; ch < frame.channels; ++ch) {
        const double v = frame.at(x0 + x, y0 + y, ch);
        c.seg.at(x, y, ch) = v;
        if (mask[p]) c.oseg.at(x, y, ch) = v;
      }
      if (mask[p] && pointmap.valid[p]) c.points.push_back(pointmap.coords[p]);
    }
  return c;
}

LevelInputs build_levels(const Image& frame, const Mask& mask, const PointMap& pointmap, FeatureProviders& providers) {
  const Crops c = make_crops(frame, mask, pointmap);
  LevelInputs in;
  in.clip_full = providers.clip(frame);
  in.clip_seg = providers.clip(c.seg);
  in.clip_oseg = providers.clip(c.oseg);
  in.dino_full = providers.dino(frame);
  in.dino_seg = providers.dino(c.seg);
  in.point = providers.point(c.points);
  return in;
}

// ---------------------------------------------------------------------------
// Fusion model

namespace {

Tensor identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return Tensor({n, n}, std::move(v));
}

Tensor gaussian(std::size_t rows, std::size_t cols, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, sigma);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = dist(rng);
  return Tensor({rows, cols}, std::move(v));
}

}  // namespace

FusionModel::FusionModel(const FusionConfig& config) : config_(config) {
  const std::size_t d = config.clip_dim, dd = config.dino_dim, dp = config.point_dim, hidden = 2 * config.clip_dim;
  if (d == 0 || dd == 0 || dp == 0) throw ContractError("fusion model widths must be positive");
  if (!std::isfinite(config.init_k) || !std::isfinite(config.init_b)) throw DomainError("k and b must be finite");
  std::mt19937_64 rng(config.seed);
  auto add = [this](std::string name, Tensor t) { params_.emplace_back(std::move(name), ad::Var::parameter(std::move(t))); };

  add("dino_proj", gaussian(dd, d, 1.0 / std::sqrt(static_cast<double>(dd)), rng));
  {
    // Concat projection: small random weights on the DINO half, identity on the CLIP half.
    const Tensor top = gaussian(d, d, config.init_scale / std::sqrt(static_cast<double>(d)), rng);
    std::vector<double> v(top.vec());
    const Tensor eye = identity(d);
    v.insert(v.end(), eye.vec().begin(), eye.vec().end());
    add("cat_proj", Tensor({2 * d, d}, std::move(v)));
  }
  add("cat_bias", Tensor::zeros({1, d}));
  add("point_proj", gaussian(dp, d, 1.0 / std::sqrt(static_cast<double>(dp)), rng));
  for (const char* prefix : {"cd", "os", "w"}) {
    for (const char* role : {"_q", "_k", "_v"}) add(std::string(prefix) + role, identity(d));
  }
  add("mlp_w1", gaussian(d, hidden, 1.0 / std::sqrt(static_cast<double>(d)), rng));
  add("mlp_b1", Tensor::zeros({1, hidden}));
  add("mlp_w2", gaussian(hidden, d, config.init_scale / std::sqrt(static_cast<double>(hidden)), rng));
  add("mlp_b2", Tensor::zeros({1, d}));
  add("k", Tensor::scalar(config.init_k));
  add("b", Tensor::scalar(config.init_b));
}

std::vector<ad::Var> FusionModel::parameters() const {
  std::vector<ad::Var> out;
  for (const auto& [name, v] : params_) out.push_back(v);
  return out;
}

ad::Var& FusionModel::param(const std::string& name) {
  for (auto& [n, v] : params_)
    if (n == name) return v;
  throw ContractError("fusion model has no parameter '" + name + "'");
}

const ad::Var& FusionModel::param(const std::string& name) const {
  for (const auto& [n, v] : params_)
    if (n == name) return v;
  throw ContractError("fusion model has no parameter '" + name + "'");
}

FusionModel FusionModel::clone() const {
  FusionModel m(*this);
  for (auto& [name, v] : m.params_) v = ad::Var::parameter(v.value());
  return m;
}

ad::AttentionProjections FusionModel::projections(const std::string& prefix) const {
  return {param(prefix + "_q"), param(prefix + "_k"), param(prefix + "_v")};
}

ad::Var FusionModel::d_full_seg(const ad::Var& clip, const ad::Var& dino) const {
  auto attend = [this](const ad::Var& q, const ad::Var& kv) {
    return config_.attention_projections ? ad::scaled_cross_attention(q, kv, projections("cd"))
                                         : ad::scaled_cross_attention(q, kv);
  };
  if (!config_.use_dino) return ad::mean_rows(ad::add(clip, attend(clip, clip)));
  if (dino.rows() != clip.rows()) {
    throw ShapeError("DINO and CLIP token counts differ: " + std::to_string(dino.rows()) + " vs " +
                     std::to_string(clip.rows()));
  }
  const ad::Var dp = ad::matmul(dino, param("dino_proj"));
  const ad::Var cat = ad::add_row(ad::matmul(ad::concat_cols(dp, clip), param("cat_proj")), param("cat_bias"));
  return ad::mean_rows(ad::add(ad::add(clip, cat), attend(cat, clip)));
}

ad::Var FusionModel::d_oseg(const ad::Var& clip_oseg, const ad::Var& point) const {
  if (!config_.use_point) return ad::mean_rows(clip_oseg);
  const ad::Var pp = ad::matmul(point, param("point_proj"));
  const ad::Var att = config_.attention_projections ? ad::scaled_cross_attention(pp, clip_oseg, projections("os"))
                                                    : ad::scaled_cross_attention(pp, clip_oseg);
  return ad::add(ad::mean_rows(clip_oseg), ad::mean_rows(att));
}

ad::Var FusionModel::level_weights(const ad::Var& levels) const {
  const ad::Var att = config_.attention_projections ? ad::scaled_cross_attention(levels, levels, projections("w"))
                                                    : ad::scaled_cross_attention(levels, levels);
  const ad::Var h = ad::add(levels, att);
  const ad::Var hidden = ad::tanh(ad::add_row(ad::matmul(h, param("mlp_w1")), param("mlp_b1")));
  ad::Var logits = ad::add_row(ad::matmul(hidden, param("mlp_w2")), param("mlp_b2"));
  if (!config_.scalar_weights) return ad::col_softmax(logits);
  const std::size_t d = levels.cols();
  const ad::Var avg = ad::Var::constant(Tensor::filled({d, 1}, 1.0 / static_cast<double>(d)));
  const ad::Var w = ad::col_softmax(ad::matmul(logits, avg));
  return ad::matmul(w, ad::Var::constant(Tensor::filled({1, d}, 1.0)));
}

FusedDescriptor FusionModel::forward(const LevelInputs& in) const {
  const std::size_t d = config_.clip_dim;
  auto check = [](const Tensor& t, std::size_t width, const char* what) {
    if (t.dims().size() != 2 || t.cols() != width) {
      throw ShapeError(std::string(what) + " has shape " + t.shape_string() + ", expected width " +
                       std::to_string(width));
    }
  };
  check(in.clip_full, d, "F_clip^f");
  check(in.clip_seg, d, "F_clip^s");
  check(in.clip_oseg, d, "F_clip^os");
  if (config_.use_dino) {
    check(in.dino_full, config_.dino_dim, "F_dino^f");
    check(in.dino_seg, config_.dino_dim, "F_dino^s");
  }
  if (config_.use_point) check(in.point, config_.point_dim, "F_point^os");

  FusedDescriptor out;
  out.d_full = d_full_seg(ad::Var::constant(in.clip_full), ad::Var::constant(in.dino_full));
  out.d_seg = d_full_seg(ad::Var::constant(in.clip_seg), ad::Var::constant(in.dino_seg));
  out.d_oseg = d_oseg(ad::Var::constant(in.clip_oseg), ad::Var::constant(in.point));
  const ad::Var levels = ad::concat_rows({out.d_full, out.d_seg, out.d_oseg});
  out.weights = level_weights(levels);
  const ad::Var ones = ad::Var::constant(Tensor::filled({1, 3}, 1.0));
  out.descriptor = ad::normalize_rows(ad::matmul(ones, ad::mul(out.weights, levels)));
  return out;
}

std::vector<double> FusionModel::describe(const LevelInputs& in) const { return forward(in).descriptor.value().vec(); }

// ---------------------------------------------------------------------------
// Similarity loss, training, inference

double sim_pair_loss(double dot, int z, double k, double b) {
  const double x = static_cast<double>(z) * (k * dot - b);
  // -log sigmoid(x) = log(1 + exp(-x)), split by sign to stay finite.
  return x >= 0.0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

ad::Var sim_loss(const ad::Var& descriptors, std::span<const std::uint32_t> labels, const Tensor& text,
                 const ad::Var& k, const ad::Var& b) {
  const std::size_t n = descriptors.rows();
  if (n < 2) throw ContractError("similarity loss needs a batch of at least 2 pairs, got " + std::to_string(n));
  if (labels.size() != n) throw ShapeError("similarity loss: label count differs from batch size");
  if (text.cols() != descriptors.cols()) throw ShapeError("similarity loss: descriptor and text widths differ");
  const std::size_t c = text.rows();
  std::vector<double> z(n * c, -1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= c) throw ContractError("label " + std::to_string(labels[i]) + " has no text embedding");
    z[i * c + labels[i]] = 1.0;
  }
  const ad::Var sims = ad::matmul(descriptors, ad::Var::constant(transpose(text)));
  const ad::Var logits = ad::add_scalar(ad::mul_scalar(sims, k), ad::neg(b));
  const ad::Var signed_logits = ad::mul(ad::Var::constant(Tensor({n, c}, std::move(z))), logits);
  return ad::scale(ad::sum(ad::log_sigmoid(signed_logits)), -1.0 / static_cast<double>(n));
}

void OvsDataset::validate() const {
  if (inputs.size() != labels.size()) throw ShapeError("dataset has mismatched input and label counts");
  if (classes.size() != text.rows()) throw ShapeError("class table and text embeddings differ in length");
  for (auto l : labels)
    if (l >= classes.size()) throw ContractError("dataset label " + std::to_string(l) + " outside the class table");
}

std::size_t OvsDataset::class_count_present() const {
  std::vector<std::uint32_t> l(labels);
  std::sort(l.begin(), l.end());
  return static_cast<std::size_t>(std::unique(l.begin(), l.end()) - l.begin());
}

Tensor normalize_rows(const Tensor& t) {
  const std::size_t n = t.rows(), m = t.cols();
  std::vector<double> v(t.vec());
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += v[i * m + j] * v[i * m + j];
    if (!(s > 0.0)) throw DomainError("cannot normalise a zero row");
    const double inv = 1.0 / std::sqrt(s);
    for (std::size_t j = 0; j < m; ++j) v[i * m + j] *= inv;
  }
  return Tensor({n, m}, std::move(v));
}

TrainResult train_fusion(const OvsDataset& data, const FusionModel& init, const TrainConfig& cfg) {
  data.validate();
  if (data.class_count_present() < 2) throw ContractError("training needs at least two classes (no negatives otherwise)");
  if (cfg.batch_size < 2) throw ContractError("batch size must be at least 2");
  TrainResult result{init.clone(), {}};
  FusionModel& model = result.model;
  const Tensor text = normalize_rows(data.text);
  const auto params = model.parameters();
  Optimizer opt(cfg.optimizer);
  std::mt19937_64 rng(cfg.seed);

  std::vector<std::size_t> order(data.inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      batches.emplace_back(s, std::min(order.size(), s + cfg.batch_size));
    }
    if (batches.size() > 1 && batches.back().second - batches.back().first < 2) {
      batches[batches.size() - 2].second = batches.back().second;
      batches.pop_back();
    }
    double total = 0.0;
    for (const auto& [s, e] : batches) {
      std::vector<ad::Var> rows;
      std::vector<std::uint32_t> labels;
      for (std::size_t i = s; i < e; ++i) {
        rows.push_back(model.forward(data.inputs[order[i]]).descriptor);
        labels.push_back(data.labels[order[i]]);
      }
      const ad::Var loss = sim_loss(ad::concat_rows(rows), labels, text, model.param("k"), model.param("b"));
      Optimizer::zero_grad(params);
      ad::backward(loss);
      opt.step(params);
      total += loss.value().item() * static_cast<double>(e - s);
    }
    result.loss_trace.push_back(total / static_cast<double>(order.size()));
  }
  return result;
}

Classification classify(std::span<const double> d, const Tensor& text) {
  if (text.dims().size() != 2 || text.rows() == 0) throw ContractError("classification needs at least one text embedding");
  if (text.cols() != d.size()) throw ShapeError("descriptor and text widths differ");
  double dn = 0.0;
  for (double v : d) dn += v * v;
  if (!(dn > 0.0)) throw DomainError("cannot classify a zero descriptor");
  dn = std::sqrt(dn);
  Classification c;
  const std::size_t m = text.cols();
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < text.rows(); ++j) {
    double dot = 0.0, tn = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      dot += d[i] * text.vec()[j * m + i];
      tn += text.vec()[j * m + i] * text.vec()[j * m + i];
    }
    if (!(tn > 0.0)) throw DomainError("text embedding " + std::to_string(j) + " is zero");
    const double s = dot / (dn * std::sqrt(tn));
    c.scores.push_back(s);
    if (s > best) {
      best = s;
      c.index = static_cast<std::uint32_t>(j);
    }
  }
  return c;
}

double accuracy(const FusionModel& model, const OvsDataset& data) {
  if (data.inputs.empty()) throw ContractError("accuracy of an empty dataset");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < data.inputs.size(); ++i) {
    if (classify(model.describe(data.inputs[i]), data.text).index == data.labels[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(data.inputs.size());
}

void aggregate_segment_descriptor(Segment3D& seg, std::span<const double> view_descriptor, double weight) {
  if (!(weight > 0.0) || !std::isfinite(weight)) throw ContractError("view weight must be positive");
  if (seg.weighted_sum.empty()) seg.weighted_sum.assign(view_descriptor.size(), 0.0);
  if (seg.weighted_sum.size() != view_descriptor.size()) throw ShapeError("descriptor width changed between views");
  double norm = 0.0;
  for (std::size_t i = 0; i < view_descriptor.size(); ++i) {
    seg.weighted_sum[i] += weight * view_descriptor[i];
    norm += seg.weighted_sum[i] * seg.weighted_sum[i];
  }
  seg.total_weight += weight;
  if (!(norm > 0.0)) throw DomainError("aggregated descriptor of segment " + std::to_string(seg.id) + " vanished");
  norm = std::sqrt(norm);
  seg.descriptor.resize(seg.weighted_sum.size());
  for (std::size_t i = 0; i < seg.weighted_sum.size(); ++i) seg.descriptor[i] = seg.weighted_sum[i] / norm;
}

}  // namespace ov3r
