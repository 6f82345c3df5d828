#include "ov3r/pnp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "ov3r/errors.hpp"

namespace ov3r {

namespace {

constexpr std::size_t kMinCorrespondences = 6;

using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

struct ControlFrame {
  std::vector<Vec3> world;              // control points, world frame
  std::vector<std::vector<double>> alphas;  // per correspondence barycentrics
};

ControlFrame choose_control_points(std::span<const Correspondence> corr) {
  const auto n = corr.size();
  Vec3 c0 = Vec3::Zero();
  for (const auto& c : corr) c0 += c.point;
  c0 /= static_cast<double>(n);
  Mat3 cov = Mat3::Zero();
  for (const auto& c : corr) cov += (c.point - c0) * (c.point - c0).transpose();
  cov /= static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Vec3 lambda = eig.eigenvalues();  // ascending
  if (!(lambda(2) > 0.0) || lambda(1) <= 1e-12 * lambda(2)) {
    throw DegeneracyError("pnp: world points are collinear or coincident");
  }
  const bool planar = lambda(0) <= 1e-10 * lambda(2);

  ControlFrame frame;
  frame.world.push_back(c0);
  for (int axis = 2; axis >= (planar ? 1 : 0); --axis) {
    frame.world.push_back(c0 + std::sqrt(lambda(axis)) * eig.eigenvectors().col(axis));
  }
  const auto m = frame.world.size() - 1;
  MatX basis(3, m);
  for (std::size_t j = 0; j < m; ++j) basis.col(static_cast<Eigen::Index>(j)) = frame.world[j + 1] - c0;
  const auto solver = basis.colPivHouseholderQr();
  frame.alphas.reserve(n);
  for (const auto& c : corr) {
    const VecX a = solver.solve(VecX(c.point - c0));
    std::vector<double> alpha(m + 1);
    alpha[0] = 1.0 - a.sum();
    for (std::size_t j = 0; j < m; ++j) alpha[j + 1] = a(static_cast<Eigen::Index>(j));
    frame.alphas.push_back(std::move(alpha));
  }
  return frame;
}

// Difference vectors of the control-point pairs for one null-space vector.
std::vector<Vec3> pair_differences(const VecX& v, std::size_t nc) {
  std::vector<Vec3> out;
  for (std::size_t a = 0; a < nc; ++a)
    for (std::size_t b = a + 1; b < nc; ++b)
      out.push_back(v.segment<3>(static_cast<Eigen::Index>(3 * a)) - v.segment<3>(static_cast<Eigen::Index>(3 * b)));
  return out;
}

// Gauss-Newton on the control-point distance constraints.
void refine_betas(std::vector<double>& beta, const std::vector<std::vector<Vec3>>& diffs,
                  const std::vector<double>& rho) {
  const auto dim = beta.size();
  const auto pairs = rho.size();
  for (int iter = 0; iter < 10; ++iter) {
    MatX jac(pairs, dim);
    VecX res(pairs);
    for (std::size_t p = 0; p < pairs; ++p) {
      Vec3 d = Vec3::Zero();
      for (std::size_t k = 0; k < dim; ++k) d += beta[k] * diffs[k][p];
      res(static_cast<Eigen::Index>(p)) = d.squaredNorm() - rho[p];
      for (std::size_t k = 0; k < dim; ++k) jac(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k)) = 2.0 * d.dot(diffs[k][p]);
    }
    const VecX step = jac.colPivHouseholderQr().solve(-res);
    if (!step.allFinite()) return;
    for (std::size_t k = 0; k < dim; ++k) beta[k] += step(static_cast<Eigen::Index>(k));
    if (step.norm() < 1e-14) return;
  }
}

double mean_sq_error(std::span<const Correspondence> corr, const Intrinsics& k, const Pose& pose) {
  double total = 0.0;
  for (const auto& c : corr) {
    const double e = reprojection_error(c, k, pose);
    total += e * e;
  }
  return total / static_cast<double>(corr.size());
}

}  // namespace

double reprojection_error(const Correspondence& c, const Intrinsics& k, const Pose& pose) {
  const Vec3 p = pose.apply(c.point);
  if (!(p.z() > 0.0)) return std::numeric_limits<double>::infinity();
  const Vec2 px(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy);
  return (px - c.pixel).norm();
}

Pose epnp(std::span<const Correspondence> corr, const Intrinsics& k) {
  if (corr.size() < kMinCorrespondences) throw ContractError("epnp needs at least 6 correspondences");
  const ControlFrame frame = choose_control_points(corr);
  const auto nc = frame.world.size();
  const auto cols = static_cast<Eigen::Index>(3 * nc);

  MatX m(static_cast<Eigen::Index>(2 * corr.size()), cols);
  for (std::size_t i = 0; i < corr.size(); ++i) {
    const double x = (corr[i].pixel.x() - k.cx) / k.fx;
    const double y = (corr[i].pixel.y() - k.cy) / k.fy;
    const auto r = static_cast<Eigen::Index>(2 * i);
    for (std::size_t j = 0; j < nc; ++j) {
      const double a = frame.alphas[i][j];
      const auto c = static_cast<Eigen::Index>(3 * j);
      m(r, c) = a;
      m(r, c + 1) = 0.0;
      m(r, c + 2) = -a * x;
      m(r + 1, c) = 0.0;
      m(r + 1, c + 1) = a;
      m(r + 1, c + 2) = -a * y;
    }
  }
  Eigen::SelfAdjointEigenSolver<MatX> eig(m.transpose() * m);
  const MatX& vecs = eig.eigenvectors();

  std::vector<double> rho;
  for (std::size_t a = 0; a < nc; ++a)
    for (std::size_t b = a + 1; b < nc; ++b) rho.push_back((frame.world[a] - frame.world[b]).squaredNorm());
  const auto pairs = rho.size();

  std::vector<std::vector<Vec3>> diffs;
  for (Eigen::Index kk = 0; kk < 3; ++kk) diffs.push_back(pair_differences(vecs.col(kk), nc));

  std::vector<Vec3> world_points;
  world_points.reserve(corr.size());
  for (const auto& c : corr) world_points.push_back(c.point);

  std::optional<Pose> best;
  double best_err = std::numeric_limits<double>::infinity();
  auto try_betas = [&](std::vector<double> beta) {
    refine_betas(beta, diffs, rho);
    VecX x = VecX::Zero(cols);
    for (std::size_t kk = 0; kk < beta.size(); ++kk) x += beta[kk] * vecs.col(static_cast<Eigen::Index>(kk));
    std::vector<Vec3> cam_ctrl(nc);
    for (std::size_t j = 0; j < nc; ++j) cam_ctrl[j] = x.segment<3>(static_cast<Eigen::Index>(3 * j));
    std::vector<Vec3> cam_points(corr.size(), Vec3::Zero());
    double mean_z = 0.0;
    for (std::size_t i = 0; i < corr.size(); ++i) {
      for (std::size_t j = 0; j < nc; ++j) cam_points[i] += frame.alphas[i][j] * cam_ctrl[j];
      mean_z += cam_points[i].z();
    }
    if (mean_z < 0.0)
      for (auto& p : cam_points) p = -p;
    try {
      const Sim3 rigid = umeyama_align(world_points, cam_points, false);
      const Pose pose(rigid.rotation, rigid.translation);
      const double err = mean_sq_error(corr, k, pose);
      if (err < best_err) {
        best_err = err;
        best = pose;
      }
    } catch (const DegeneracyError&) {
    } catch (const DomainError&) {
    }
  };

  // One null-space vector.
  {
    double num = 0.0, den = 0.0;
    for (std::size_t p = 0; p < pairs; ++p) {
      num += std::sqrt(rho[p]) * diffs[0][p].norm();
      den += diffs[0][p].squaredNorm();
    }
    if (den > 0.0) try_betas({num / den});
  }
  // Two and three null-space vectors: linearise over products of betas.
  for (std::size_t dim = 2; dim <= 3; ++dim) {
    const std::size_t unknowns = dim * (dim + 1) / 2;
    if (unknowns > pairs) break;
    MatX l(static_cast<Eigen::Index>(pairs), static_cast<Eigen::Index>(unknowns));
    VecX r(static_cast<Eigen::Index>(pairs));
    for (std::size_t p = 0; p < pairs; ++p) {
      std::size_t col = 0;
      for (std::size_t a = 0; a < dim; ++a)
        for (std::size_t b = a; b < dim; ++b) {
          const double f = (a == b ? 1.0 : 2.0) * diffs[a][p].dot(diffs[b][p]);
          l(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(col++)) = f;
        }
      r(static_cast<Eigen::Index>(p)) = rho[p];
    }
    const VecX prod = l.colPivHouseholderQr().solve(r);
    if (!prod.allFinite()) continue;
    // prod layout: b11 b12 (b13) b22 (b23) (b33)
    std::vector<double> beta(dim);
    beta[0] = std::sqrt(std::abs(prod(0)));
    std::size_t diag = dim;  // index of b22
    for (std::size_t a = 1; a < dim; ++a) {
      const double cross = prod(static_cast<Eigen::Index>(a));  // b1a
      beta[a] = std::sqrt(std::abs(prod(static_cast<Eigen::Index>(diag)))) * (cross < 0.0 ? -1.0 : 1.0);
      diag += dim - a;
    }
    try_betas(beta);
  }
  if (!best) throw DegeneracyError("epnp: no valid pose from the control-point solutions");
  return *best;
}

Pose refine_pose(std::span<const Correspondence> corr, const Intrinsics& k, const Pose& initial,
                 std::size_t max_iterations) {
  Pose pose = initial;
  double lambda = 1e-6;
  double cost = mean_sq_error(corr, k, pose);
  for (std::size_t iter = 0; iter < max_iterations && std::isfinite(cost); ++iter) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto& c : corr) {
      const Vec3 p = pose.apply(c.point);
      if (!(p.z() > 0.0)) continue;
      const double iz = 1.0 / p.z();
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << k.fx * iz, 0.0, -k.fx * p.x() * iz * iz, 0.0, k.fy * iz, -k.fy * p.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> dp;
      dp.block<3, 3>(0, 0) << 0.0, p.z(), -p.y(), -p.z(), 0.0, p.x(), p.y(), -p.x(), 0.0;
      dp.block<3, 3>(0, 3) = Mat3::Identity();
      const Eigen::Matrix<double, 2, 6> j = dproj * dp;
      const Vec2 r(k.fx * p.x() * iz + k.cx - c.pixel.x(), k.fy * p.y() * iz + k.cy - c.pixel.y());
      h += j.transpose() * j;
      g += j.transpose() * r;
    }
    bool improved = false;
    for (int attempt = 0; attempt < 10 && !improved; ++attempt) {
      Eigen::Matrix<double, 6, 6> damped = h;
      damped.diagonal() += lambda * h.diagonal().cwiseMax(1e-12);
      const Eigen::Matrix<double, 6, 1> step = damped.ldlt().solve(-g);
      if (!step.allFinite()) break;
      const Mat3 dr = rotation_from_vector(step.head<3>());
      Pose candidate;
      candidate.rotation = dr * pose.rotation;
      candidate.translation = dr * pose.translation + step.tail<3>();
      // Re-orthonormalise to keep the rotation exact.
      Eigen::JacobiSVD<Mat3> svd(candidate.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
      candidate.rotation = svd.matrixU() * svd.matrixV().transpose();
      const double new_cost = mean_sq_error(corr, k, candidate);
      if (new_cost <= cost) {
        improved = true;
        const double rel_change = (cost - new_cost) / std::max(cost, 1e-300);
        pose = candidate;
        cost = new_cost;
        lambda = std::max(lambda * 0.1, 1e-12);
        if (step.norm() < 1e-15 || rel_change < 1e-15) return pose;
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) break;
  }
  return pose;
}

PnpResult pnp_ransac(std::span<const Correspondence> corr, const Intrinsics& k, const PnpOptions& options) {
  k.validate();
  const auto n = corr.size();
  if (n < kMinCorrespondences) {
    throw ContractError("pnp_ransac needs at least 6 correspondences, got " + std::to_string(n));
  }

  auto inliers_of = [&](const Pose& pose, double* sq_error) {
    std::vector<std::size_t> in;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = reprojection_error(corr[i], k, pose);
      if (e <= options.inlier_px) {
        in.push_back(i);
        total += e * e;
      }
    }
    if (sq_error) *sq_error = total;
    return in;
  };
  auto subset = [&](const std::vector<std::size_t>& idx) {
    std::vector<Correspondence> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(corr[i]);
    return out;
  };

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> best_inliers;
  double best_error = std::numeric_limits<double>::infinity();
  std::vector<Correspondence> sample(kMinCorrespondences);
  for (std::size_t it = 0; it < options.iterations; ++it) {
    // Partial Fisher-Yates for a distinct sample.
    for (std::size_t s = 0; s < kMinCorrespondences; ++s) {
      std::uniform_int_distribution<std::size_t> pick(s, n - 1);
      std::swap(order[s], order[pick(rng)]);
      sample[s] = corr[order[s]];
    }
    Pose hypothesis;
    try {
      hypothesis = epnp(sample, k);
    } catch (const NumericError&) {
      continue;
    }
    double err = 0.0;
    auto in = inliers_of(hypothesis, &err);
    if (in.size() > best_inliers.size() || (in.size() == best_inliers.size() && err < best_error)) {
      best_inliers = std::move(in);
      best_error = err;
    }
  }
  if (best_inliers.size() < kMinCorrespondences) {
    throw EstimationFailure("pnp_ransac: best hypothesis has only " + std::to_string(best_inliers.size()) +
                            " inliers");
  }

  PnpResult result;
  std::vector<std::size_t> inliers = best_inliers;
  for (int round = 0; round < 10; ++round) {
    const auto support = subset(inliers);
    Pose pose;
    try {
      pose = epnp(support, k);
    } catch (const NumericError&) {
      throw EstimationFailure("pnp_ransac: inlier set does not determine a pose");
    }
    pose = refine_pose(support, k, pose);
    auto next = inliers_of(pose, nullptr);
    result.pose = pose;
    if (next == inliers) break;
    if (next.size() < kMinCorrespondences) {
      throw EstimationFailure("pnp_ransac: refinement left fewer than 6 inliers");
    }
    inliers = std::move(next);
  }
  result.inliers = inliers_of(result.pose, nullptr);
  if (result.inliers.size() < kMinCorrespondences) {
    throw EstimationFailure("pnp_ransac: refined pose has fewer than 6 inliers");
  }
  double total = 0.0;
  for (auto i : result.inliers) {
    const double e = reprojection_error(corr[i], k, result.pose);
    total += e * e;
  }
  result.rms_reprojection_px = std::sqrt(total / static_cast<double>(result.inliers.size()));
  return result;
}

}  // namespace ov3r
