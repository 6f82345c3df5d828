// Test helper for the CLI workflow.
//   fixture_tool degenerate <dir>             manifest whose points all coincide
//   fixture_tool serve <manifest> <exchange>  answers every window of the
//                                             manifest's schedule in directory mode
#include <chrono>
#include <iostream>
#include <string>

#include "ov3r/external_predictor.hpp"
#include "ov3r/io.hpp"

namespace fs = std::filesystem;
using namespace ov3r;

int degenerate(const fs::path& dir) {
  fs::create_directories(dir);
  io::SceneManifest m;
  m.classes = {"thing"};
  for (std::uint32_t id = 0; id < 9; ++id) {
    const std::string stem = std::to_string(id);
    io::ManifestFrame f;
    f.id = id;
    f.image = dir / (stem + "_image.ovtf");
    io::write_image(f.image, Image::blank(4, 3));
    f.pose = Pose(Mat3::Identity(), Vec3(0.1 * id, 0.0, 0.0));
    f.gt_points = dir / (stem + "_points.ovtf");
    std::vector<double> pts;
    for (int p = 0; p < 12; ++p) pts.insert(pts.end(), {0.0, 0.0, 2.0});
    ovtf::write(*f.gt_points, ovtf::Blob::f64({3, 4, 3}, pts));
    m.frames.push_back(f);
  }
  m.window.incremental_length = 5;
  io::save_manifest(dir / "manifest.json", m);
  return 0;
}

int serve(const fs::path& manifest, const fs::path& exchange) {
  const auto m = io::load_manifest(manifest);
  OraclePredictor backend(io::ground_truth(m), 0.0, 0);
  const auto windows = keyframe_schedule(io::frame_infos(m), m.window).size();
  fs::create_directories(exchange);
  serve_directory(exchange, backend, windows, std::chrono::seconds(120));
  return 0;
}

int main(int argc, char** argv) {
  try {
    const std::string cmd = argc > 1 ? argv[1] : "";
    if (cmd == "degenerate" && argc == 3) return degenerate(argv[2]);
    if (cmd == "serve" && argc == 4) return serve(argv[2], argv[3]);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  std::cerr << "usage: fixture_tool degenerate <dir> | serve <manifest> <exchange-dir>\n";
  return 2;
}
