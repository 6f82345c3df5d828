#include <benchmark/benchmark.h>

#include <random>

#include "ov3r/fusion_ops.hpp"
#include "ov3r/nearest.hpp"
#include "ov3r/ovs.hpp"
#include "ov3r/pipeline.hpp"
#include "ov3r/pnp.hpp"
#include "ov3r/synthetic.hpp"

namespace {

using namespace ov3r;

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(r * c);
  for (auto& x : v) x = g(rng);
  return Tensor({r, c}, v);
}

void BM_ClipCrossAttention(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto t = static_cast<std::size_t>(state.range(0));
  const auto a = ad::Var::constant(random_tensor(t, 64, rng)), b = ad::Var::constant(random_tensor(t, 64, rng));
  for (auto _ : state) benchmark::DoNotOptimize(clip_cross_attention(a, b));
}
BENCHMARK(BM_ClipCrossAttention)->Arg(8)->Arg(64)->Arg(256);

void BM_FuseDescriptor(benchmark::State& state) {
  std::mt19937_64 rng(2);
  FusionConfig c;
  c.clip_dim = static_cast<std::size_t>(state.range(0));
  const FusionModel m(c);
  const LevelInputs in{random_tensor(4, c.clip_dim, rng), random_tensor(4, c.clip_dim, rng),
                       random_tensor(4, c.clip_dim, rng), random_tensor(4, c.dino_dim, rng),
                       random_tensor(4, c.dino_dim, rng), random_tensor(1, c.point_dim, rng)};
  for (auto _ : state) benchmark::DoNotOptimize(m.describe(in));
}
BENCHMARK(BM_FuseDescriptor)->Arg(16)->Arg(64);

void BM_FuseBackward(benchmark::State& state) {
  std::mt19937_64 rng(3);
  synth::SeparableConfig sc;
  sc.samples = 64;
  const auto data = synth::separable_dataset(sc);
  FusionConfig c;
  c.dino_dim = sc.dino_dim;
  c.point_dim = sc.point_dim;
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 64;
  for (auto _ : state) benchmark::DoNotOptimize(train_fusion(data, FusionModel(c), tc));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_FuseBackward);

void BM_NearestNeighbour(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> ref(static_cast<std::size_t>(state.range(0))), q(10000);
  for (auto& p : ref) p = Vec3(u(rng), u(rng), u(rng));
  for (auto& p : q) p = Vec3(u(rng), u(rng), u(rng));
  for (auto _ : state) benchmark::DoNotOptimize(nn_distances(q, ref));
  state.SetItemsProcessed(state.iterations() * 10000);
}
BENCHMARK(BM_NearestNeighbour)->Arg(10000)->Arg(100000);

void BM_PnpRansac(benchmark::State& state) {
  std::mt19937_64 rng(5);
  const Intrinsics k{500, 500, 319.5, 239.5, 640, 480};
  const Pose truth(random_rotation(rng), Vec3(0.1, 0.2, 0.3));
  std::uniform_real_distribution<double> ux(0, 639), uy(0, 479), z(2, 6);
  std::vector<Correspondence> corr;
  for (int i = 0; i < state.range(0); ++i) {
    const Vec2 px(ux(rng), uy(rng));
    corr.push_back({truth.inverse().apply(unproject(px, z(rng), k)), i % 10 < 3 ? Vec2(px + Vec2(50, 50)) : px});
  }
  for (auto _ : state) benchmark::DoNotOptimize(pnp_ransac(corr, k));
}
BENCHMARK(BM_PnpRansac)->Arg(50)->Arg(600);

void BM_RunStream(benchmark::State& state) {
  synth::RoomConfig rc;
  rc.frames = 48;
  const auto scene = synth::make_room(rc);
  const auto frames = synth::frame_infos(scene);
  const auto gt = synth::ground_truth(scene);
  for (auto _ : state) {
    OraclePredictor pred(gt, 0.005, 1);
    benchmark::DoNotOptimize(run_stream(frames, pred, WindowConfig{}));
  }
  state.SetItemsProcessed(state.iterations() * 48);
}
BENCHMARK(BM_RunStream)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
