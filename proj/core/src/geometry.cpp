#include "ov3r/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

#include "ov3r/errors.hpp"

namespace ov3r {

bool is_rotation(const Mat3& r, double tol) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < tol && std::abs(r.determinant() - 1.0) < tol;
}

Pose::Pose(const Mat3& r, const Vec3& t) : rotation(r), translation(t) {
  if (!is_rotation(r)) throw DomainError("pose rotation is not a proper rotation matrix");
  if (!t.allFinite()) throw DomainError("pose translation is not finite");
}

Pose Pose::compose(const Pose& rhs) const {
  Pose out;
  out.rotation = rotation * rhs.rotation;
  out.translation = rotation * rhs.translation + translation;
  return out;
}

Pose Pose::inverse() const {
  Pose out;
  out.rotation = rotation.transpose();
  out.translation = -(out.rotation * translation);
  return out;
}

Sim3::Sim3(double s, const Mat3& r, const Vec3& t) : scale(s), rotation(r), translation(t) {
  if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("similarity scale must be positive");
  if (!is_rotation(r)) throw DomainError("similarity rotation is not a proper rotation matrix");
  if (!t.allFinite()) throw DomainError("similarity translation is not finite");
}

Sim3 Sim3::compose(const Sim3& rhs) const {
  Sim3 out;
  out.scale = scale * rhs.scale;
  out.rotation = rotation * rhs.rotation;
  out.translation = scale * (rotation * rhs.translation) + translation;
  return out;
}

Sim3 Sim3::inverse() const {
  Sim3 out;
  out.scale = 1.0 / scale;
  out.rotation = rotation.transpose();
  out.translation = -(out.scale * (out.rotation * translation));
  return out;
}

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ContractError("intrinsics: focal lengths must be positive");
  if (width == 0 || height == 0) throw ContractError("intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < static_cast<double>(width)) || !(cy >= 0.0 && cy < static_cast<double>(height))) {
    throw ContractError("intrinsics: principal point outside the image");
  }
}

std::optional<Vec2> project(const Vec3& world_point, const Intrinsics& k, const Pose& world_to_camera) {
  const Vec3 c = world_to_camera.apply(world_point);
  if (!(c.z() > 0.0)) return std::nullopt;
  const Vec2 px(k.fx * c.x() / c.z() + k.cx, k.fy * c.y() / c.z() + k.cy);
  if (px.x() < 0.0 || px.y() < 0.0 || px.x() >= static_cast<double>(k.width) ||
      px.y() >= static_cast<double>(k.height)) {
    return std::nullopt;
  }
  return px;
}

std::vector<std::optional<Vec2>> project(std::span<const Vec3> points, const Intrinsics& k,
                                         const Pose& world_to_camera) {
  std::vector<std::optional<Vec2>> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(project(p, k, world_to_camera));
  return out;
}

Vec3 unproject(const Vec2& pixel, double depth, const Intrinsics& k) {
  return {(pixel.x() - k.cx) / k.fx * depth, (pixel.y() - k.cy) / k.fy * depth, depth};
}

Sim3 umeyama_align(std::span<const Vec3> src, std::span<const Vec3> dst, bool with_scale,
                   std::span<const double> weights) {
  const std::size_t n = src.size();
  if (dst.size() != n) throw ContractError("umeyama_align: source and destination sizes differ");
  if (!weights.empty() && weights.size() != n) throw ContractError("umeyama_align: weight count differs");
  if (n < 3) throw DegeneracyError("umeyama_align needs at least 3 correspondences, got " + std::to_string(n));

  double total = 0.0;
  Vec3 mu_src = Vec3::Zero(), mu_dst = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (!(w >= 0.0)) throw ContractError("umeyama_align: weights must be non-negative");
    total += w;
    mu_src += w * src[i];
    mu_dst += w * dst[i];
  }
  if (!(total > 0.0)) throw DegeneracyError("umeyama_align: all weights are zero");
  mu_src /= total;
  mu_dst /= total;

  Mat3 cov = Mat3::Zero();
  Mat3 scatter = Mat3::Zero();
  double var_src = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = (weights.empty() ? 1.0 : weights[i]) / total;
    const Vec3 a = src[i] - mu_src;
    const Vec3 b = dst[i] - mu_dst;
    cov += w * b * a.transpose();
    scatter += w * a * a.transpose();
    var_src += w * a.squaredNorm();
  }

  Eigen::JacobiSVD<Mat3> scatter_svd(scatter);
  const auto sv = scatter_svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0)) {
    throw DegeneracyError("umeyama_align: source points are collinear or coincident");
  }

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto d = svd.singularValues();
  if (!(d(0) > 0.0) || d(1) <= 1e-12 * d(0)) {
    throw DegeneracyError("umeyama_align: correspondence cross-covariance has rank < 2");
  }
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;
  const Mat3 r = svd.matrixU() * s * svd.matrixV().transpose();
  const double scale = with_scale ? (d.asDiagonal() * s).trace() / var_src : 1.0;
  const Vec3 t = mu_dst - scale * (r * mu_src);
  return Sim3(scale, r, t);
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  return q.toRotationMatrix();
}

Mat3 rotation_from_vector(const Vec3& omega) {
  const double angle = omega.norm();
  if (angle < 1e-300) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
  return Eigen::AngleAxisd(a.transpose() * b).angle();
}

}  // namespace ov3r
