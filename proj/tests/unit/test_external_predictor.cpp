#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>
#include <thread>

#include "ov3r/errors.hpp"
#include "ov3r/external_predictor.hpp"
#include "ov3r/synthetic.hpp"

namespace ov3r {
namespace {

synth::Scene small_scene() { return synth::make_two_boxes(5, 16, 12, 20.0); }

std::vector<GroundTruthFrame> with_features(const synth::Scene& scene) {
  auto gt = synth::ground_truth(scene);
  for (auto& g : gt) {
    g.features = Tensor::from_rows({{1.0, static_cast<double>(g.id)}, {0.5, 2.0}});
    g.has_features = true;
  }
  return gt;
}

TEST(Protocol, RequestRoundTrip) {
  WindowRequest r;
  r.frames = {4, 5, 6};
  r.keyframe_index = 1;
  const auto back = decode_request(encode_request(r));
  EXPECT_EQ(back.frames, r.frames);
  EXPECT_EQ(back.keyframe_index, 1u);
  EXPECT_THROW(decode_request(ovtf::Blob::u32({1}, std::vector<std::uint32_t>{0})), ShapeError);
}

TEST(Protocol, ResponseRoundTrip) {
  const auto scene = small_scene();
  OraclePredictor oracle(with_features(scene), 0.01, 3);
  WindowRequest r;
  r.frames = {0, 1, 2};
  r.keyframe_index = 1;
  const auto p = oracle.predict(r);
  const auto blobs = encode_response(p);
  EXPECT_EQ(blobs.size(), 5u);
  const auto q = decode_response(blobs, r);
  ASSERT_EQ(q.pointmaps.size(), 3u);
  EXPECT_EQ(q.pointmaps[2].coords, p.pointmaps[2].coords);
  EXPECT_EQ(q.pointmaps[2].valid, p.pointmaps[2].valid);
  EXPECT_EQ(q.features, p.features);
  WindowRequest wrong = r;
  wrong.frames.push_back(3);
  EXPECT_THROW(decode_response(blobs, wrong), ShapeError);
}

TEST(Protocol, StreamModeMatchesInProcess) {
  const auto scene = small_scene();
  OraclePredictor oracle(with_features(scene), 0.01, 3), backend(with_features(scene), 0.01, 3);
  WindowConfig cfg;
  cfg.init_length = 3;
  cfg.incremental_length = 3;
  const auto frames = synth::frame_infos(scene);

  // Record the requests a stream run would make, answer them offline, then replay.
  std::stringstream requests, responses;
  for (const auto& w : keyframe_schedule(frames, cfg)) ovtf::write_frame(requests, encode_request(w));
  serve_stream(requests, responses, backend);
  std::stringstream sink;
  StreamPredictor stream(responses, sink);
  const SceneState a = run_stream(frames, stream, cfg);
  const SceneState b = run_stream(frames, oracle, cfg);
  EXPECT_EQ(a.world_points, b.world_points);
}

TEST(Protocol, DirectoryModeMatchesInProcess) {
  const auto scene = small_scene();
  const auto dir = std::filesystem::temp_directory_path() / "ov3r_dir_predictor";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  WindowConfig cfg;
  cfg.init_length = 3;
  cfg.incremental_length = 3;
  const auto frames = synth::frame_infos(scene);
  const auto windows = keyframe_schedule(frames, cfg).size();

  OraclePredictor backend(with_features(scene), 0.0, 1), oracle(with_features(scene), 0.0, 1);
  std::thread server([&] { serve_directory(dir, backend, windows, std::chrono::seconds(30)); });
  DirectoryPredictor remote(dir, std::chrono::seconds(30));
  const SceneState a = run_stream(frames, remote, cfg);
  server.join();
  const SceneState b = run_stream(frames, oracle, cfg);
  EXPECT_EQ(a.world_points, b.world_points);
  std::filesystem::remove_all(dir);
}

TEST(Protocol, DirectoryTimeoutIsPipelineError) {
  const auto scene = small_scene();
  const auto dir = std::filesystem::temp_directory_path() / "ov3r_dir_timeout";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  DirectoryPredictor remote(dir, std::chrono::milliseconds(50));
  WindowConfig cfg;
  cfg.init_length = 3;
  EXPECT_THROW(run_stream(synth::frame_infos(scene), remote, cfg), PipelineError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace ov3r
