#include "ov3r/pointmap.hpp"

#include <cmath>

#include "ov3r/errors.hpp"

namespace ov3r {

PointMap PointMap::blank(std::size_t width, std::size_t height, FrameKind frame, std::uint32_t keyframe) {
  PointMap pm;
  pm.width = width;
  pm.height = height;
  pm.coords.assign(width * height, Vec3::Zero());
  pm.confidence.assign(width * height, 1.0);
  pm.valid.assign(width * height, 0);
  pm.frame = frame;
  pm.keyframe = keyframe;
  return pm;
}

std::size_t PointMap::count_valid() const {
  std::size_t n = 0;
  for (auto v : valid) n += v != 0;
  return n;
}

std::vector<std::size_t> PointMap::valid_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < valid.size(); ++i)
    if (valid[i]) out.push_back(i);
  return out;
}

std::vector<Vec3> PointMap::valid_points() const {
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < valid.size(); ++i)
    if (valid[i]) out.push_back(coords[i]);
  return out;
}

void PointMap::validate() const {
  const auto n = width * height;
  if (width == 0 || height == 0) throw ShapeError("pointmap has zero extent");
  if (coords.size() != n || confidence.size() != n || valid.size() != n) {
    throw ShapeError("pointmap buffers do not match " + std::to_string(width) + "x" + std::to_string(height));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    if (!coords[i].allFinite()) throw DomainError("pointmap: non-finite coordinate at pixel " + std::to_string(i));
    if (!(confidence[i] > 0.0) || !std::isfinite(confidence[i])) {
      throw DomainError("pointmap: non-positive confidence at valid pixel " + std::to_string(i));
    }
  }
}

PointMap PointMap::transformed(const Sim3& t, FrameKind new_frame) const {
  PointMap out = *this;
  for (std::size_t i = 0; i < coords.size(); ++i)
    if (valid[i]) out.coords[i] = t.apply(coords[i]);
  out.frame = new_frame;
  return out;
}

}  // namespace ov3r
