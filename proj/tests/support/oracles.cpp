#include "oracles.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>

namespace ov3r::oracle {

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

Tensor to_tensor(const Mat& m) {
  std::vector<double> v;
  for (const auto& r : m) v.insert(v.end(), r.begin(), r.end());
  return Tensor({m.size(), m.front().size()}, std::move(v));
}

Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.size(), std::vector<double>(b.front().size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.front().size(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < b.size(); ++p) s += a[i][p] * b[p][j];
      out[i][j] = s;
    }
  return out;
}

Mat transpose(const Mat& a) {
  Mat out(a.front().size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) out[j][i] = a[i][j];
  return out;
}

Mat add(const Mat& a, const Mat& b) {
  Mat out = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) out[i][j] = a[i][j] + b[i][j];
  return out;
}

std::vector<double> mean_rows(const Mat& a) {
  std::vector<double> out(a.front().size(), 0.0);
  for (const auto& r : a)
    for (std::size_t j = 0; j < r.size(); ++j) out[j] += r[j];
  for (auto& v : out) v /= static_cast<double>(a.size());
  return out;
}

Mat attention(const Mat& q0, const Mat& kv, const Mat* wq, const Mat* wk, const Mat* wv) {
  const Mat q = wq ? matmul(q0, *wq) : q0;
  const Mat k = wk ? matmul(kv, *wk) : kv;
  const Mat v = wv ? matmul(kv, *wv) : kv;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.front().size()));
  Mat out(q.size(), std::vector<double>(v.front().size(), 0.0));
  for (std::size_t i = 0; i < q.size(); ++i) {
    std::vector<double> logit(k.size());
    for (std::size_t j = 0; j < k.size(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < q[i].size(); ++p) s += q[i][p] * k[j][p];
      logit[j] = s * inv_sqrt_d;
    }
    const double mx = *std::max_element(logit.begin(), logit.end());
    double total = 0.0;
    for (auto& l : logit) {
      l = std::exp(l - mx);
      total += l;
    }
    for (auto& l : logit) l /= total;
    for (std::size_t c = 0; c < v.front().size(); ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < k.size(); ++j) s += logit[j] * v[j][c];
      out[i][c] = s;
    }
  }
  return out;
}

Mat clip_cross_attention(const Mat& vit, const Mat& oclip) {
  return add(vit, attention(vit, oclip, nullptr, nullptr, nullptr));
}

namespace {

struct Params {
  Mat dino_proj, cat_proj, cat_bias, point_proj, mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  Mat cd[3], os[3], w[3];
  bool proj = true;
};

Params read_params(const FusionModel& m) {
  Params p;
  auto g = [&m](const char* n) { return to_mat(m.param(n).value()); };
  p.dino_proj = g("dino_proj");
  p.cat_proj = g("cat_proj");
  p.cat_bias = g("cat_bias");
  p.point_proj = g("point_proj");
  p.mlp_w1 = g("mlp_w1");
  p.mlp_b1 = g("mlp_b1");
  p.mlp_w2 = g("mlp_w2");
  p.mlp_b2 = g("mlp_b2");
  const char* roles[] = {"_q", "_k", "_v"};
  for (int r = 0; r < 3; ++r) {
    p.cd[r] = g((std::string("cd") + roles[r]).c_str());
    p.os[r] = g((std::string("os") + roles[r]).c_str());
    p.w[r] = g((std::string("w") + roles[r]).c_str());
  }
  p.proj = m.config().attention_projections;
  return p;
}

Mat attend(const Mat& q, const Mat& kv, const Mat (&w)[3], bool proj) {
  return proj ? attention(q, kv, &w[0], &w[1], &w[2]) : attention(q, kv, nullptr, nullptr, nullptr);
}

// Levels 1-2: F_clip + F_cat + softmax(F_cat F_clip^T / sqrt(D)) F_clip, F_cat = Linear([F_dino W, F_clip]).
std::vector<double> full_or_seg(const Params& p, bool use_dino, const Mat& clip, const Mat& dino) {
  if (!use_dino) return mean_rows(add(clip, attend(clip, clip, p.cd, p.proj)));
  const Mat dp = matmul(dino, p.dino_proj);
  Mat cat_in(clip.size());
  for (std::size_t i = 0; i < clip.size(); ++i) {
    cat_in[i] = dp[i];
    cat_in[i].insert(cat_in[i].end(), clip[i].begin(), clip[i].end());
  }
  Mat cat = matmul(cat_in, p.cat_proj);
  for (auto& r : cat)
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += p.cat_bias[0][j];
  return mean_rows(add(add(clip, cat), attend(cat, clip, p.cd, p.proj)));
}

}  // namespace

Fused fuse(const FusionModel& model, const LevelInputs& in) {
  const Params p = read_params(model);
  const auto& cfg = model.config();
  Fused f;
  f.d_full = full_or_seg(p, cfg.use_dino, to_mat(in.clip_full), cfg.use_dino ? to_mat(in.dino_full) : Mat{});
  f.d_seg = full_or_seg(p, cfg.use_dino, to_mat(in.clip_seg), cfg.use_dino ? to_mat(in.dino_seg) : Mat{});
  // Level 3: F_clip^os + softmax(F_point F_clip^os^T / sqrt(D)) F_clip^os, each side pooled over its tokens.
  const Mat os = to_mat(in.clip_oseg);
  f.d_oseg = mean_rows(os);
  if (cfg.use_point) {
    const auto att = mean_rows(attend(matmul(to_mat(in.point), p.point_proj), os, p.os, p.proj));
    for (std::size_t j = 0; j < att.size(); ++j) f.d_oseg[j] += att[j];
  }

  // Level weights: attention over the three level tokens, MLP, softmax across levels.
  const Mat x{f.d_full, f.d_seg, f.d_oseg};
  const std::size_t d = f.d_full.size();
  const Mat h = add(x, attend(x, x, p.w, p.proj));
  Mat hidden = matmul(h, p.mlp_w1);
  for (auto& r : hidden)
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = std::tanh(r[j] + p.mlp_b1[0][j]);
  Mat logits = matmul(hidden, p.mlp_w2);
  for (auto& r : logits)
    for (std::size_t j = 0; j < d; ++j) r[j] += p.mlp_b2[0][j];
  if (cfg.scalar_weights) {
    for (auto& r : logits) {
      double s = 0.0;
      for (double v : r) s += v / static_cast<double>(d);
      std::fill(r.begin(), r.end(), s);
    }
  }
  f.weights.assign(3, std::vector<double>(d));
  for (std::size_t j = 0; j < d; ++j) {
    const double mx = std::max({logits[0][j], logits[1][j], logits[2][j]});
    double total = 0.0;
    for (int i = 0; i < 3; ++i) total += std::exp(logits[i][j] - mx);
    for (int i = 0; i < 3; ++i) f.weights[i][j] = std::exp(logits[i][j] - mx) / total;
  }
  f.descriptor.assign(d, 0.0);
  double norm = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    for (int i = 0; i < 3; ++i) f.descriptor[j] += f.weights[i][j] * x[i][j];
    norm += f.descriptor[j] * f.descriptor[j];
  }
  for (auto& v : f.descriptor) v /= std::sqrt(norm);
  return f;
}

double sim_loss(const Mat& descriptors, std::span<const std::uint32_t> labels, const Mat& text, double k, double b) {
  double total = 0.0;
  for (std::size_t i = 0; i < descriptors.size(); ++i)
    for (std::size_t j = 0; j < text.size(); ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < text[j].size(); ++c) dot += descriptors[i][c] * text[j][c];
      const double z = labels[i] == j ? 1.0 : -1.0;
      total += std::log(1.0 / (1.0 + std::exp(z * (-k * dot + b))));
    }
  return -total / static_cast<double>(descriptors.size());
}

std::pair<double, double> accuracy_completion(std::span<const Vec3> pred, std::span<const Vec3> gt) {
  auto mean_nn = [](std::span<const Vec3> a, std::span<const Vec3> b) {
    double s = 0.0;
    for (const auto& p : a) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : b) best = std::min(best, (p - q).norm());
      s += best;
    }
    return 100.0 * s / static_cast<double>(a.size());
  };
  return {mean_nn(pred, gt), mean_nn(gt, pred)};
}

Sim3 horn_align(std::span<const Vec3> src, std::span<const Vec3> dst, bool with_scale) {
  const double n = static_cast<double>(src.size());
  Vec3 ma = Vec3::Zero(), mb = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    ma += src[i];
    mb += dst[i];
  }
  ma /= n;
  mb /= n;
  Mat3 s = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) s += (src[i] - ma) * (dst[i] - mb).transpose();
  const double sxx = s(0, 0), sxy = s(0, 1), sxz = s(0, 2), syx = s(1, 0), syy = s(1, 1), syz = s(1, 2),
               szx = s(2, 0), szy = s(2, 1), szz = s(2, 2);
  Eigen::Matrix4d nmat;
  nmat << sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,  //
      syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,      //
      szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,     //
      sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(nmat);
  const Eigen::Vector4d q = es.eigenvectors().col(3);
  const Mat3 r = Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized().toRotationMatrix();
  double scale = 1.0;
  if (with_scale) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      num += (dst[i] - mb).dot(r * (src[i] - ma));
      den += (src[i] - ma).squaredNorm();
    }
    scale = num / den;
  }
  return Sim3(scale, r, mb - scale * (r * ma));
}

double ate_rmse(const Trajectory& pred, const Trajectory& gt, bool align, bool with_scale) {
  std::vector<Vec3> a, b;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    a.push_back(pred[i].pose.translation);
    b.push_back(gt[i].pose.translation);
  }
  const Sim3 t = align ? horn_align(a, b, with_scale) : Sim3();
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (t.apply(a[i]) - b[i]).squaredNorm();
  return 100.0 * std::sqrt(s / static_cast<double>(a.size()));
}

std::vector<ClassIoU> per_class(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> gt,
                                std::uint32_t classes) {
  std::vector<ClassIoU> out(classes);
  for (std::uint32_t c = 0; c < classes; ++c) {
    std::size_t tp = 0, uni = 0, g = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] == kUnlabeled) continue;
      const bool in_gt = gt[i] == c, in_pred = pred[i] == c;
      tp += in_gt && in_pred;
      uni += in_gt || in_pred;
      g += in_gt;
    }
    if (g == 0) continue;
    out[c] = {static_cast<double>(tp) / static_cast<double>(uni), static_cast<double>(tp) / static_cast<double>(g), true};
  }
  return out;
}

std::pair<double, double> miou_macc(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> gt,
                                    std::uint32_t classes) {
  double iou = 0.0, acc = 0.0;
  int n = 0;
  for (const auto& c : per_class(pred, gt, classes)) {
    if (!c.present) continue;
    iou += c.iou;
    acc += c.acc;
    ++n;
  }
  return {iou / n, acc / n};
}

std::vector<std::uint32_t> cosine_ranking(const std::vector<std::pair<std::uint32_t, std::vector<double>>>& keys,
                                          std::span<const double> query) {
  std::vector<std::pair<double, std::uint32_t>> scored;
  for (const auto& [id, key] : keys) {
    double dot = 0.0, a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < key.size(); ++i) {
      dot += key[i] * query[i];
      a += key[i] * key[i];
      b += query[i] * query[i];
    }
    scored.emplace_back(-(dot / std::sqrt(a * b)), id);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<std::uint32_t> out;
  for (const auto& s : scored) out.push_back(s.second);
  return out;
}

}  // namespace ov3r::oracle
