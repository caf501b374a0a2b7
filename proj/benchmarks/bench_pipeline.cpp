// Microbenchmarks for the hot paths: rendering, noise, encoding, retrieval,
// and map maintenance. Run via ./ipr_benchmarks [--benchmark_filter=...].
#include <cstdint>
#include <vector>

#include <benchmark/benchmark.h>

#include "ipr/mapstore.hpp"
#include "ipr/model.hpp"
#include "ipr/query.hpp"
#include "ipr/rng.hpp"
#include "ipr/scan_synth.hpp"
#include "ipr/training.hpp"

namespace {

using namespace ipr;

const WorldModel& bench_world() {
  static const WorldModel world = WorldModel::random(7, 60, 70.0);
  return world;
}

Pose bench_pose() {
  Pose p;
  p.x = 55.0;
  p.y = 0.0;
  p.heading = 1.0;
  return p;
}

CartesianScan bench_scan(int side) {
  const PolarScan polar = render_polar_scan(bench_world(), bench_pose(), 100, 256, 0.5);
  return polar_to_cartesian(polar, side, 2.0);
}

ModelConfig bench_model_config() {
  ModelConfig cfg;
  cfg.input_w = 64;
  cfg.c1 = 4;
  cfg.c2 = 8;
  cfg.pool = 4;
  cfg.d = 8;
  cfg.f = 16;
  return cfg;
}

void BM_render_polar_scan(benchmark::State& state) {
  const Pose pose = bench_pose();
  for (auto _ : state) {
    PolarScan scan =
        render_polar_scan(bench_world(), pose, static_cast<int>(state.range(0)), 256, 0.5);
    benchmark::DoNotOptimize(scan.intensities.data());
  }
}
BENCHMARK(BM_render_polar_scan)->Arg(100)->Arg(400);

void BM_polar_to_cartesian(benchmark::State& state) {
  const PolarScan polar = render_polar_scan(bench_world(), bench_pose(), 100, 256, 0.5);
  for (auto _ : state) {
    CartesianScan cart = polar_to_cartesian(polar, static_cast<int>(state.range(0)), 2.0);
    benchmark::DoNotOptimize(cart.intensities.data());
  }
}
BENCHMARK(BM_polar_to_cartesian)->Arg(64)->Arg(128);

void BM_apply_noise(benchmark::State& state) {
  const CartesianScan scan = bench_scan(64);
  NoiseConfig cfg;
  cfg.speckle_sigma = 0.35;
  cfg.saturation_prob = 0.1;
  cfg.occlusion_sectors = 2;
  cfg.occlusion_width = 0.5;
  cfg.blur_azimuths = 6;
  std::uint64_t frame = 0;
  for (auto _ : state) {
    cfg.seed = ++frame;
    auto noisy = apply_noise(scan, cfg);
    benchmark::DoNotOptimize(noisy.first.intensities.data());
  }
}
BENCHMARK(BM_apply_noise);

void BM_rotate_scan(benchmark::State& state) {
  const CartesianScan scan = bench_scan(64);
  for (auto _ : state) {
    CartesianScan rotated = rotate_scan(scan, 0.7);
    benchmark::DoNotOptimize(rotated.intensities.data());
  }
}
BENCHMARK(BM_rotate_scan);

void BM_encode(benchmark::State& state) {
  const ModelConfig cfg = bench_model_config();
  const ModelParams params = ModelParams::init(cfg, 3);
  const CartesianScan scan = bench_scan(64);
  for (auto _ : state) {
    Embedding e = inference_embedding(params, scan);
    benchmark::DoNotOptimize(e.z.data());
  }
}
BENCHMARK(BM_encode);

void BM_train_step(benchmark::State& state) {
  const ModelConfig cfg = bench_model_config();
  const ModelParams params = ModelParams::init(cfg, 3);
  TrainConfig tc;
  tc.batch_size = 8;
  Batch batch;
  for (int i = 0; i < 8; ++i) {
    const CartesianScan scan = bench_scan(64);
    batch.originals.push_back(scan);
    batch.augmented.push_back(rotate_scan(scan, 0.3 * i));
    batch.indices.push_back(i);
  }
  std::uint64_t step = 0;
  for (auto _ : state) {
    GradResult result = gradients(batch, params, tc, ++step);
    benchmark::DoNotOptimize(result.grads.g.fc_w.data());
  }
}
BENCHMARK(BM_train_step);

ParentMap bench_map(int entries, int dim) {
  Rng rng(11);
  std::vector<MapEntry> session;
  for (int i = 0; i < entries; ++i) {
    MapEntry e;
    e.x = 7.0 * i;
    e.y = 0.0;
    for (int k = 0; k < dim; ++k)
      e.embedding.push_back(static_cast<float>(rng.uniform(-1.0, 1.0)));
    e.uncertainty = static_cast<float>(rng.uniform(0.0, 1.0));
    session.push_back(std::move(e));
  }
  return init_map(session, 5.0);
}

void BM_knn(benchmark::State& state) {
  const ParentMap map = bench_map(static_cast<int>(state.range(0)), 8);
  const std::vector<double> query = {0.3, -0.2, 0.9, 0.1, -0.5, 0.4, 0.0, 0.7};
  for (auto _ : state) {
    KnnResult result = knn(map, query, 5);
    benchmark::DoNotOptimize(result.matches.data());
  }
}
BENCHMARK(BM_knn)->Arg(48)->Arg(1000)->Arg(10000);

void BM_merge_scan(benchmark::State& state) {
  Rng rng(13);
  for (auto _ : state) {
    state.PauseTiming();
    ParentMap map = bench_map(static_cast<int>(state.range(0)), 8);
    MapEntry incoming = map.entries[map.entries.size() / 2];
    incoming.uncertainty = static_cast<float>(rng.uniform(0.0, 1.0));
    state.ResumeTiming();
    benchmark::DoNotOptimize(merge_scan(map, incoming));
  }
}
BENCHMARK(BM_merge_scan)->Arg(48)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
