#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace ov3r {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Rigid transform x -> R x + t.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  /// Throws DomainError unless rotation is orthonormal with det +1 (1e-9).
  Pose(const Mat3& r, const Vec3& t);

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
  Pose compose(const Pose& rhs) const;  // (this o rhs)(x) = this(rhs(x))
  Pose inverse() const;
};

/// Similarity x -> s R x + t.
struct Sim3 {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Sim3() = default;
  Sim3(double s, const Mat3& r, const Vec3& t);
  explicit Sim3(const Pose& p) : Sim3(1.0, p.rotation, p.translation) {}

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
  Sim3 compose(const Sim3& rhs) const;
  Sim3 inverse() const;
};

struct Intrinsics {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  std::size_t width = 1, height = 1;

  /// Throws ContractError unless fx, fy > 0 and the principal point lies in
  /// the image.
  void validate() const;
};

/// Rotation-matrix validity check shared by Pose and Sim3.
bool is_rotation(const Mat3& r, double tol = 1e-9);

/// Pixel of a world point for a camera whose pose maps world to camera
/// coordinates; nullopt when behind the camera or outside the image.
std::optional<Vec2> project(const Vec3& world_point, const Intrinsics& k, const Pose& world_to_camera);
std::vector<std::optional<Vec2>> project(std::span<const Vec3> points, const Intrinsics& k,
                                         const Pose& world_to_camera);

/// Camera-frame point at the given pixel and depth (z).
Vec3 unproject(const Vec2& pixel, double depth, const Intrinsics& k);

/// Least-squares similarity (or rigid, when with_scale is false) taking src
/// onto dst. Optional non-negative weights, one per pair.
/// Throws DegeneracyError for fewer than 3 pairs or collinear configurations.
Sim3 umeyama_align(std::span<const Vec3> src, std::span<const Vec3> dst, bool with_scale,
                   std::span<const double> weights = {});

/// Camera-to-world pose of one frame.
struct TrajectoryEntry {
  std::uint32_t frame = 0;
  Pose pose;
};
using Trajectory = std::vector<TrajectoryEntry>;

Mat3 random_rotation(std::mt19937_64& rng);
Mat3 rotation_from_vector(const Vec3& omega);
double rotation_angle_between(const Mat3& a, const Mat3& b);

}  // namespace ov3r
