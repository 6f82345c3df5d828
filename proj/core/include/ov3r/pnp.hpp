#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ov3r/geometry.hpp"

namespace ov3r {

struct Correspondence {
  Vec3 point;  // world frame
  Vec2 pixel;
};

struct PnpOptions {
  std::size_t iterations = 512;
  double inlier_px = 2.0;
  std::uint64_t seed = 0;
};

struct PnpResult {
  Pose pose;  // world -> camera
  std::vector<std::size_t> inliers;  // ascending indices into the input
  double rms_reprojection_px = 0.0;
};

/// Linear PnP from 6+ correspondences using four (three for planar scenes)
/// control points, followed by no refinement. Throws DegeneracyError when the
/// configuration does not determine a pose.
Pose epnp(std::span<const Correspondence> corr, const Intrinsics& k);

/// Levenberg-Marquardt minimisation of squared reprojection error over the
/// given correspondences, starting from `initial`.
Pose refine_pose(std::span<const Correspondence> corr, const Intrinsics& k, const Pose& initial,
                 std::size_t max_iterations = 50);

double reprojection_error(const Correspondence& c, const Intrinsics& k, const Pose& pose);

/// Robust pose from 3D-2D matches. Throws ContractError for fewer than 6
/// correspondences and EstimationFailure when no hypothesis reaches 6
/// inliers. Every returned inlier reprojects within options.inlier_px.
PnpResult pnp_ransac(std::span<const Correspondence> corr, const Intrinsics& k, const PnpOptions& options = {});

}  // namespace ov3r
