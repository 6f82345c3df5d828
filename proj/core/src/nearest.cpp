#include "ov3r/nearest.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <thread>

#include "ov3r/errors.hpp"

namespace ov3r {

namespace {
constexpr std::size_t kLeafSize = 8;
}

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()), order_(points.size()) {
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 1);
    build(0, points_.size());
  }
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back({begin, end, -1, 0.0, 0, 0});
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi(axis) - lo(axis) <= 0.0) return id;  // all coincident

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) { return points_[a](axis) < points_[b](axis); });
  const double split = points_[order_[mid]](axis);
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(std::size_t node_id, const Vec3& q, Hit& best) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const double d = (points_[order_[i]] - q).norm();
      if (d < best.distance || (d == best.distance && order_[i] < best.index)) best = {order_[i], d};
    }
    return;
  }
  const double delta = q(node.axis) - node.split;
  const std::size_t near = delta < 0.0 ? node.left : node.right;
  const std::size_t far = delta < 0.0 ? node.right : node.left;
  search(near, q, best);
  // Left holds values <= split and right values >= split, so the far side can
  // only help when the splitting plane is within the current best radius.
  if (std::abs(delta) <= best.distance) search(far, q, best);
}

KdTree::Hit KdTree::nearest(const Vec3& query) const {
  if (points_.empty()) throw ContractError("nearest neighbour query on an empty point set");
  Hit best{0, std::numeric_limits<double>::infinity()};
  search(0, query, best);
  return best;
}

std::vector<double> nn_distances(std::span<const Vec3> query, std::span<const Vec3> reference, std::size_t threads) {
  if (reference.empty()) throw ContractError("nn_distances: reference set is empty");
  const KdTree tree(reference);
  std::vector<double> out(query.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = tree.nearest(query[i]).distance;
  };
  threads = std::max<std::size_t>(1, std::min(threads, query.size() / 256 + 1));
  if (threads == 1) {
    work(0, query.size());
    return out;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (query.size() + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t b = t * chunk, e = std::min(query.size(), b + chunk);
    if (b < e) pool.emplace_back(work, b, e);
  }
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace ov3r
