#include "ov3r/external_predictor.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <thread>

#include "ov3r/errors.hpp"

namespace ov3r {

namespace fs = std::filesystem;

ovtf::Blob encode_request(const WindowRequest& request) {
  std::vector<std::uint32_t> v;
  v.push_back(static_cast<std::uint32_t>(request.keyframe_index));
  v.insert(v.end(), request.frames.begin(), request.frames.end());
  return ovtf::Blob::u32({v.size()}, v);
}

WindowRequest decode_request(const ovtf::Blob& blob) {
  const auto v = blob.to_u32();
  if (blob.dims.size() != 1 || v.size() < 2) throw ShapeError("request tensor must be a u32 vector of length >= 2");
  WindowRequest r;
  r.keyframe_index = v[0];
  r.frames.assign(v.begin() + 1, v.end());
  if (r.keyframe_index >= r.frames.size()) throw ContractError("request keyframe index out of range");
  return r;
}

std::vector<ovtf::Blob> encode_response(const WindowPrediction& prediction) {
  if (prediction.pointmaps.empty()) throw ContractError("empty prediction");
  const auto& first = prediction.pointmaps.front();
  const std::uint64_t L = prediction.pointmaps.size(), H = first.height, W = first.width;
  const bool has_features = !prediction.features.empty();
  std::vector<double> pts, conf;
  std::vector<std::uint8_t> valid;
  for (const auto& pm : prediction.pointmaps) {
    if (pm.width != W || pm.height != H) throw ShapeError("pointmaps in a window must share one size");
    for (std::size_t p = 0; p < pm.pixel_count(); ++p) {
      pts.insert(pts.end(), {pm.coords[p].x(), pm.coords[p].y(), pm.coords[p].z()});
      conf.push_back(pm.confidence[p]);
      valid.push_back(pm.valid[p]);
    }
  }
  const std::vector<std::uint32_t> header{static_cast<std::uint32_t>(L), static_cast<std::uint32_t>(H),
                                          static_cast<std::uint32_t>(W), has_features ? 1u : 0u};
  std::vector<ovtf::Blob> out{ovtf::Blob::u32({4}, header), ovtf::Blob::f64({L, H, W, 3}, pts),
                              ovtf::Blob::f64({L, H, W}, conf), ovtf::Blob::u8({L, H, W}, valid)};
  if (has_features) {
    if (prediction.features.size() != L) throw ShapeError("features must be given for every frame or none");
    const auto& f0 = prediction.features.front();
    std::vector<double> feats;
    for (const auto& f : prediction.features) {
      if (f.dims() != f0.dims()) throw ShapeError("feature tensors in a window must share one shape");
      feats.insert(feats.end(), f.values().begin(), f.values().end());
    }
    out.push_back(ovtf::Blob::f64({L, f0.rows(), f0.cols()}, feats));
  }
  return out;
}

WindowPrediction decode_response(std::span<const ovtf::Blob> blobs, const WindowRequest& request) {
  if (blobs.size() < 4) throw ShapeError("response needs header, points, conf and valid tensors");
  const auto header = blobs[0].to_u32();
  if (header.size() != 4) throw ShapeError("response header must hold 4 values");
  const std::size_t L = header[0], H = header[1], W = header[2];
  const bool has_features = header[3] != 0;
  if (L != request.frames.size()) {
    throw ShapeError("response holds " + std::to_string(L) + " frames for a window of " +
                     std::to_string(request.frames.size()));
  }
  if (blobs.size() != (has_features ? 5u : 4u)) throw ShapeError("response tensor count disagrees with header");
  const std::vector<std::uint64_t> pdims{L, H, W, 3}, sdims{L, H, W};
  if (blobs[1].dims != pdims || blobs[2].dims != sdims || blobs[3].dims != sdims) {
    throw ShapeError("response tensor dims disagree with header");
  }
  const auto pts = blobs[1].to_f64();
  const auto conf = blobs[2].to_f64();
  const auto valid = blobs[3].to_u8();
  WindowPrediction out;
  const std::size_t n = H * W;
  for (std::size_t l = 0; l < L; ++l) {
    PointMap pm = PointMap::blank(W, H, FrameKind::local, request.keyframe());
    for (std::size_t p = 0; p < n; ++p) {
      const std::size_t i = l * n + p;
      pm.coords[p] = Vec3(pts[3 * i], pts[3 * i + 1], pts[3 * i + 2]);
      pm.confidence[p] = conf[i];
      pm.valid[p] = valid[i] ? 1 : 0;
    }
    out.pointmaps.push_back(std::move(pm));
  }
  if (has_features) {
    const auto& fb = blobs[4];
    if (fb.dims.size() != 3 || fb.dims[0] != L) throw ShapeError("feature tensor must be L x T x D");
    const auto f = fb.to_f64();
    const std::size_t t = fb.dims[1], d = fb.dims[2];
    for (std::size_t l = 0; l < L; ++l) {
      std::vector<double> slice(f.begin() + static_cast<std::ptrdiff_t>(l * t * d),
                                f.begin() + static_cast<std::ptrdiff_t>((l + 1) * t * d));
      out.features.emplace_back(Dims{t, d}, std::move(slice));
    }
  }
  return out;
}

namespace {

const char* const kParts[] = {"header", "points", "conf", "valid", "features"};

fs::path response_path(const fs::path& dir, std::uint64_t n, const char* part) {
  return dir / ("response_" + std::to_string(n) + "_" + part + ".ovtf");
}

void touch(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw IoError("cannot create " + p.string());
}

bool wait_for(const fs::path& p, std::chrono::milliseconds timeout, std::chrono::milliseconds poll) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (!fs::exists(p)) {
    if (std::chrono::steady_clock::now() > deadline) return false;
    std::this_thread::sleep_for(poll);
  }
  return true;
}

}  // namespace

DirectoryPredictor::DirectoryPredictor(fs::path dir, std::chrono::milliseconds timeout, std::chrono::milliseconds poll)
    : dir_(std::move(dir)), timeout_(timeout), poll_(poll) {
  fs::create_directories(dir_);
}

WindowPrediction DirectoryPredictor::predict(const WindowRequest& request) {
  const auto n = counter_++;
  const auto req = dir_ / ("request_" + std::to_string(n) + ".ovtf");
  const auto tmp = dir_ / ("request_" + std::to_string(n) + ".ovtf.tmp");
  ovtf::write(tmp, encode_request(request));
  fs::rename(tmp, req);
  const auto done = dir_ / ("response_" + std::to_string(n) + ".done");
  if (!wait_for(done, timeout_, poll_)) throw IoError("timed out waiting for " + done.string());
  std::vector<ovtf::Blob> blobs;
  for (const char* part : kParts) {
    const auto p = response_path(dir_, n, part);
    if (fs::exists(p)) blobs.push_back(ovtf::read(p));
  }
  return decode_response(blobs, request);
}

WindowPrediction StreamPredictor::predict(const WindowRequest& request) {
  ovtf::write_frame(out_, encode_request(request));
  out_.flush();
  auto header = ovtf::read_frame(in_);
  if (!header) throw IoError("predictor stream closed before a response");
  std::vector<ovtf::Blob> blobs{*header};
  const auto h = header->to_u32();
  const std::size_t expected = (h.size() == 4 && h[3] != 0) ? 5 : 4;
  while (blobs.size() < expected) {
    auto b = ovtf::read_frame(in_);
    if (!b) throw IoError("predictor stream closed mid-response");
    blobs.push_back(std::move(*b));
  }
  return decode_response(blobs, request);
}

void serve_directory(const fs::path& dir, PointmapPredictor& backend, std::uint64_t count,
                     std::chrono::milliseconds timeout) {
  for (std::uint64_t n = 0; n < count; ++n) {
    const auto req = dir / ("request_" + std::to_string(n) + ".ovtf");
    if (!wait_for(req, timeout, std::chrono::milliseconds(5))) throw IoError("timed out waiting for " + req.string());
    const auto request = decode_request(ovtf::read(req));
    const auto blobs = encode_response(backend.predict(request));
    for (std::size_t i = 0; i < blobs.size(); ++i) ovtf::write(response_path(dir, n, kParts[i]), blobs[i]);
    touch(dir / ("response_" + std::to_string(n) + ".done"));
  }
}

void serve_stream(std::istream& requests, std::ostream& responses, PointmapPredictor& backend) {
  while (auto blob = ovtf::read_frame(requests)) {
    const auto request = decode_request(*blob);
    for (const auto& b : encode_response(backend.predict(request))) ovtf::write_frame(responses, b);
    responses.flush();
  }
}

}  // namespace ov3r
