#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "ov3r/ovtf.hpp"
#include "ov3r/pipeline.hpp"

// Exchange protocol with an out-of-process pointmap predictor.
//
// Request: one u32 tensor [keyframe_index, frame ids...].
// Response: u32 header [L, H, W, has_features], then
//   points    f64 L x H x W x 3   (keyframe coordinates)
//   conf      f64 L x H x W
//   valid     u8  L x H x W
//   features  f64 L x T x D       (only when has_features == 1)
//
// Directory mode writes request_<n>.ovtf and waits for response_<n>.done,
// reading response_<n>_{header,points,conf,valid,features}.ovtf. Stream mode
// sends the same tensors as length-prefixed OVTF frames.
namespace ov3r {

ovtf::Blob encode_request(const WindowRequest& request);
WindowRequest decode_request(const ovtf::Blob& blob);

std::vector<ovtf::Blob> encode_response(const WindowPrediction& prediction);
/// Throws ShapeError when the tensors disagree with the header or with the
/// request's frame count.
WindowPrediction decode_response(std::span<const ovtf::Blob> blobs, const WindowRequest& request);

class DirectoryPredictor : public PointmapPredictor {
 public:
  DirectoryPredictor(std::filesystem::path dir, std::chrono::milliseconds timeout = std::chrono::seconds(600),
                     std::chrono::milliseconds poll = std::chrono::milliseconds(5));
  WindowPrediction predict(const WindowRequest& request) override;

 private:
  std::filesystem::path dir_;
  std::chrono::milliseconds timeout_;
  std::chrono::milliseconds poll_;
  std::uint64_t counter_ = 0;
};

class StreamPredictor : public PointmapPredictor {
 public:
  StreamPredictor(std::istream& responses, std::ostream& requests) : in_(responses), out_(requests) {}
  WindowPrediction predict(const WindowRequest& request) override;

 private:
  std::istream& in_;
  std::ostream& out_;
};

/// Responder side of directory mode: answers `count` requests in order using
/// `backend`. Used by tests and by tools that wrap an in-process predictor.
void serve_directory(const std::filesystem::path& dir, PointmapPredictor& backend, std::uint64_t count,
                     std::chrono::milliseconds timeout = std::chrono::seconds(600));

/// Responder side of stream mode: answers requests until end of stream.
void serve_stream(std::istream& requests, std::ostream& responses, PointmapPredictor& backend);

}  // namespace ov3r
