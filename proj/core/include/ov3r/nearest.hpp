#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ov3r/geometry.hpp"

namespace ov3r {

/// Exact nearest-neighbour index over a fixed 3D point set (kd-tree, median
/// splits). The points are copied; the tree is immutable after construction.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points);

  struct Hit {
    std::size_t index;
    double distance;
  };

  /// Throws ContractError if the tree is empty.
  Hit nearest(const Vec3& query) const;
  std::size_t size() const noexcept { return points_.size(); }

 private:
  struct Node {
    std::size_t begin, end;  // range in order_
    int axis;                // -1 for leaves
    double split;
    std::size_t left, right;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  void search(std::size_t node, const Vec3& q, Hit& best) const;

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

/// Distance from each query point to its nearest reference point.
/// `threads` > 1 splits the queries across worker threads; the result does
/// not depend on it.
std::vector<double> nn_distances(std::span<const Vec3> query, std::span<const Vec3> reference,
                                 std::size_t threads = 1);

}  // namespace ov3r
