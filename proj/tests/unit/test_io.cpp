#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ov3r/errors.hpp"
#include "ov3r/io.hpp"
#include "ov3r/ovtf.hpp"
#include "ov3r/synthetic.hpp"

namespace ov3r {
namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("ov3r_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  io::SceneManifest small_manifest() {
    const auto scene = synth::make_two_boxes(3, 16, 12, 20.0);
    io::SceneManifest m;
    m.classes = scene.classes;
    for (const auto& v : scene.views) {
      io::ManifestFrame f;
      f.id = v.id;
      f.image = dir / ("img" + std::to_string(v.id) + ".ovtf");
      io::write_image(f.image, v.image);
      f.intrinsics = v.intrinsics;
      f.pose = v.camera_to_world;
      m.frames.push_back(f);
    }
    m.window.init_length = 3;
    return m;
  }

  fs::path dir;
};

void write_file(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

TEST_F(TempDir, ManifestRoundTrip) {
  const auto m = small_manifest();
  io::save_manifest(dir / "sub" / "../scene.json", m);
  const auto back = io::load_manifest(dir / "scene.json");
  EXPECT_EQ(io::canonical_json(back), io::canonical_json(m));
  const auto j = nlohmann::json::parse(std::ifstream(dir / "scene.json"));
  EXPECT_EQ(j["frames"][0]["image"], "img0.ovtf");
}

TEST_F(TempDir, ManifestErrors) {
  EXPECT_THROW(io::load_manifest(dir / "absent.json"), IoError);
  write_file(dir / "bad.json", "{ not json");
  EXPECT_THROW(io::load_manifest(dir / "bad.json"), FormatError);

  auto m = small_manifest();
  m.frames.push_back(m.frames[0]);
  EXPECT_THROW(io::validate_manifest(m), ContractError);

  m = small_manifest();
  m.features.push_back({0, 0, "clip_full", dir / "nowhere.ovtf"});
  try {
    io::validate_manifest(m);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 0, mask 0, level clip_full"), std::string::npos);
  }
  m.features.back().level = "clip_huge";
  EXPECT_THROW(io::validate_manifest(m), ContractError);

  m = small_manifest();
  m.window.incremental_length = 4;
  EXPECT_THROW(io::validate_manifest(m), ContractError);
}

TEST_F(TempDir, ImageRoundTripAndU8Scaling) {
  Image img = Image::blank(2, 1);
  img.data = {0, 0.5, 1, 0.25, 0.75, 0.125};
  io::write_image(dir / "a.ovtf", img);
  EXPECT_EQ(io::read_image(dir / "a.ovtf"), img);
  ovtf::write(dir / "b.ovtf", ovtf::Blob::u8({1, 1, 3}, std::vector<std::uint8_t>{0, 255, 51}));
  const Image u = io::read_image(dir / "b.ovtf");
  EXPECT_DOUBLE_EQ(u.data[1], 1.0);
  EXPECT_DOUBLE_EQ(u.data[2], 0.2);
}

TEST_F(TempDir, SceneRoundTrip) {
  const auto scene = synth::make_two_boxes(5, 16, 12, 20.0);
  OraclePredictor pred(synth::ground_truth(scene), 0.001, 1);
  WindowConfig cfg;
  cfg.init_length = 3;
  cfg.incremental_length = 3;
  const SceneState s = run_stream(synth::frame_infos(scene), pred, cfg);
  io::save_scene(dir / "scene", s, cfg);
  const SceneState b = io::load_scene(dir / "scene");
  EXPECT_EQ(b.world_points, s.world_points);
  EXPECT_EQ(b.confidences, s.confidences);
  ASSERT_EQ(b.keyframes.size(), s.keyframes.size());
  for (std::size_t k = 0; k < s.keyframes.size(); ++k) {
    EXPECT_EQ(b.keyframes[k].frame, s.keyframes[k].frame);
    EXPECT_EQ(b.keyframes[k].world_map.coords, s.keyframes[k].world_map.coords);
    EXPECT_EQ(b.keyframes[k].point_offset, s.keyframes[k].point_offset);
    EXPECT_EQ(b.keyframes[k].pose_source, s.keyframes[k].pose_source);
    EXPECT_EQ(b.trajectory[k].pose.translation, s.trajectory[k].pose.translation);
  }
  const auto report = nlohmann::json::parse(io::reconstruction_report(s, cfg));
  EXPECT_EQ(report["keyframes"], s.keyframes.size());
  EXPECT_EQ(report["points"], s.world_points.size());
}

TEST_F(TempDir, MasksAsLabelMaps) {
  std::map<std::uint32_t, MaskSet> masks;
  masks[3] = MaskSet{3, 1, {{1, 0, 0}, {0, 0, 1}}};
  io::save_masks(dir, masks);
  const auto back = io::load_masks(dir);
  ASSERT_EQ(back.count(3), 1u);
  EXPECT_EQ(back.at(3).masks, masks[3].masks);
  ovtf::write(dir / "4.ovtf", ovtf::Blob::u32({1, 2}, std::vector<std::uint32_t>{2, 0}));
  EXPECT_THROW(io::load_masks(dir), ContractError);
}

TEST_F(TempDir, SegmentsQueryModelDataset) {
  const auto scene = synth::make_two_boxes(3);
  const SceneState state = synth::oracle_state(scene);
  std::map<std::uint32_t, MaskSet> masks;
  for (const auto& v : scene.views) masks[v.id] = synth::object_masks(v);
  SegmentTable t = match_segments(state, masks);
  aggregate_segment_descriptor(t.segments[0], std::vector<double>{1.0, 2.0}, 2.0);
  aggregate_segment_descriptor(t.segments[0], std::vector<double>{0.0, 1.0}, 1.0);
  io::save_segments(dir / "seg", t);
  const SegmentTable b = io::load_segments(dir / "seg");
  ASSERT_EQ(b.segments.size(), t.segments.size());
  EXPECT_EQ(b.point_segment, t.point_segment);
  EXPECT_EQ(b.segments[0].points, t.segments[0].points);
  EXPECT_DOUBLE_EQ(b.segments[0].total_weight, 3.0);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(b.segments[0].descriptor[i], t.segments[0].descriptor[i], 1e-15);

  io::QueryResult q{{0, kUnlabeled, 1}, {0, 1}, {{0.9, 0.1}, {0.2, 0.8}}, {"crate", "bin"}};
  io::save_query(dir / "q", q);
  const auto qb = io::load_query(dir / "q");
  EXPECT_EQ(qb.point_labels, q.point_labels);
  EXPECT_EQ(qb.segment_scores, q.segment_scores);
  EXPECT_EQ(qb.classes, q.classes);

  FusionConfig fc;
  fc.use_point = false;
  fc.seed = 4;
  const FusionModel m(fc);
  io::save_model(dir / "model", m);
  const FusionModel mb = io::load_model(dir / "model");
  EXPECT_FALSE(mb.config().use_point);
  for (std::size_t i = 0; i < m.named_parameters().size(); ++i)
    EXPECT_EQ(mb.named_parameters()[i].second.value(), m.named_parameters()[i].second.value());

  synth::SeparableConfig sc;
  sc.samples = 12;
  const auto d = synth::separable_dataset(sc);
  io::save_dataset(dir / "data", d);
  const auto db = io::load_dataset(dir / "data");
  EXPECT_EQ(db.labels, d.labels);
  EXPECT_EQ(db.text, d.text);
  EXPECT_EQ(db.inputs, d.inputs);
  EXPECT_EQ(db.classes, d.classes);
}

TEST_F(TempDir, LevelInputsRoundTrip) {
  LevelInputs in{Tensor::from_rows({{1, 2}}), Tensor::from_rows({{3, 4}}), Tensor::from_rows({{5, 6}}),
                 Tensor::from_rows({{7}}),    Tensor::from_rows({{8}}),    Tensor::from_rows({{9, 10, 11}})};
  io::save_level_inputs(dir, 2, 1, in);
  EXPECT_TRUE(fs::exists(dir / "2_1_clip_oseg.ovtf"));
  EXPECT_EQ(io::load_level_inputs(dir, 2, 1), in);
  EXPECT_THROW(io::load_level_inputs(dir, 2, 0), IoError);
}

TEST(Report, JsonAndCsv) {
  io::MetricReport r;
  r.reconstruction = AccuracyCompletion{1.5, 2.5};
  SemanticScores s;
  s.per_class = {{0, 1.0, 1.0, 4, true}, {1, 0.0, 0.0, 0, false}};
  s.miou = 1.0;
  s.macc = 1.0;
  r.semantic = s;
  r.classes = {"floor", "wall"};
  const auto j = nlohmann::json::parse(io::to_json(r));
  EXPECT_EQ(j["reconstruction"]["accuracy_cm"], 1.5);
  EXPECT_EQ(j["semantic"]["excluded_absent_classes"][0], "wall");
  const auto csv = io::per_class_csv(r);
  EXPECT_NE(csv.find("floor"), std::string::npos);
}

TEST(PoseRows, RoundTrip) {
  std::mt19937_64 rng(1);
  Trajectory t{{3, Pose(random_rotation(rng), Vec3(1, 2, 3))}, {5, Pose()}};
  const auto back = io::trajectory_from_rows(io::pose_rows(t), {3, 5});
  EXPECT_EQ(back[0].pose.rotation, t[0].pose.rotation);
  EXPECT_EQ(back[1].frame, 5u);
}

}  // namespace
}  // namespace ov3r
