#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ov3r/geometry.hpp"

namespace ov3r {

enum class FrameKind { local, world };

/// Per-pixel 3D coordinates with confidence and validity. Coordinates of
/// invalid pixels are meaningless; confidence is positive wherever valid.
struct PointMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Vec3> coords;
  std::vector<double> confidence;
  std::vector<std::uint8_t> valid;
  FrameKind frame = FrameKind::local;
  std::uint32_t keyframe = 0;  // owning keyframe id when frame == local

  /// All pixels invalid, coordinates zero, confidence one.
  static PointMap blank(std::size_t width, std::size_t height, FrameKind frame = FrameKind::local,
                        std::uint32_t keyframe = 0);

  std::size_t pixel_count() const noexcept { return width * height; }
  std::size_t index(std::size_t x, std::size_t y) const noexcept { return y * width + x; }
  bool is_valid(std::size_t i) const noexcept { return valid[i] != 0; }

  std::size_t count_valid() const;
  std::vector<std::size_t> valid_indices() const;
  std::vector<Vec3> valid_points() const;

  /// Throws ShapeError on inconsistent sizes and DomainError on non-finite
  /// valid coordinates or non-positive valid confidence.
  void validate() const;

  /// Coordinates mapped through `t`; validity and confidence unchanged.
  PointMap transformed(const Sim3& t, FrameKind new_frame) const;
};

}  // namespace ov3r
