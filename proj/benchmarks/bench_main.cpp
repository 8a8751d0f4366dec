#include <benchmark/benchmark.h>

#include <numbers>

#include "mixteach/ensemble_uncertainty.hpp"
#include "mixteach/evaluation.hpp"
#include "mixteach/geometry3d.hpp"
#include "mixteach/kitti_io.hpp"
#include "mixteach/mix_synthesis.hpp"
#include "mixteach/rng.hpp"

namespace {

using namespace mixteach;

Box3D Car(Rng& rng, double x, double z) {
  Box3D b;
  b.category = Category::Car();
  b.location = {x, 1.6, z};
  b.dimensions = {rng.UniformReal(1.3, 1.8), rng.UniformReal(1.5, 1.9), rng.UniformReal(3.5, 4.8)};
  b.rotation_y = rng.UniformReal(-std::numbers::pi, std::numbers::pi);
  b.bbox2d = {100, 100, 160, 150};
  b.score = rng.Uniform();
  return b;
}

void BM_Iou3d(benchmark::State& state) {
  Rng rng(1);
  std::vector<std::pair<Box3D, Box3D>> pairs;
  for (int i = 0; i < 1024; ++i) {
    const double x = rng.UniformReal(-5, 5), z = rng.UniformReal(5, 40);
    pairs.emplace_back(Car(rng, x, z), Car(rng, x + rng.Normal(0, 0.5), z + rng.Normal(0, 0.5)));
  }
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& [a, b] = pairs[i++ & 1023];
    benchmark::DoNotOptimize(geometry::Iou3d(a, b));
  }
}
BENCHMARK(BM_Iou3d);

// One frame: `objects` cars seen by five noisy models.
ensemble::EnsemblePredictions Frame(int objects) {
  Rng rng(2);
  ensemble::EnsemblePredictions p{"f", 5, {}};
  for (int o = 0; o < objects; ++o) {
    const double x = rng.UniformReal(-30, 30), z = rng.UniformReal(5, 80);
    for (std::size_t m = 0; m < 5; ++m) {
      if (rng.Bernoulli(0.8)) p.boxes.push_back({m, Car(rng, x + rng.Normal(0, 0.3), z + rng.Normal(0, 0.3))});
    }
  }
  return p;
}

void BM_ScoreFrame(benchmark::State& state) {
  const auto p = Frame(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(ensemble::ScoreFrame(p, {}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.boxes.size()));
}
BENCHMARK(BM_ScoreFrame)->Arg(10)->Arg(40)->Arg(160);

void BM_Ap40(benchmark::State& state) {
  Rng rng(3);
  std::vector<eval::FrameBoxes> frames(static_cast<std::size_t>(state.range(0)));
  for (auto& f : frames) {
    for (int i = 0; i < 6; ++i) {
      const double x = -20 + 7 * i, z = rng.UniformReal(8, 50);
      Box3D g = Car(rng, x, z);
      g.score.reset();
      f.gts.push_back(g);
      if (rng.Bernoulli(0.8)) f.preds.push_back(Car(rng, x + rng.Normal(0, 0.4), z + rng.Normal(0, 0.4)));
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(eval::Ap40(frames, {}));
}
BENCHMARK(BM_Ap40)->Arg(100)->Arg(1000);

void BM_MixupBlend(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  Image fg(side, side, {200, 100, 50});
  Image bg(side, side, {10, 20, 30});
  for (auto _ : state) benchmark::DoNotOptimize(mix::MixupBlend(fg, bg, 0.73));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(fg.data().size()));
}
BENCHMARK(BM_MixupBlend)->Arg(64)->Arg(256);

void BM_ComposeMixedImage(benchmark::State& state) {
  Rng rng(4);
  curation::InstanceDatabase db;
  for (int i = 0; i < 200; ++i) {
    curation::InstanceRecord r;
    r.record_id = std::to_string(i);
    const int w = static_cast<int>(rng.UniformInt(20, 120)), h = static_cast<int>(rng.UniformInt(20, 90));
    const int x0 = static_cast<int>(rng.UniformInt(0, 1242 - w)), y0 = static_cast<int>(rng.UniformInt(0, 375 - h));
    r.crop_rect = {x0, y0, x0 + w, y0 + h};
    r.patch = Image(w, h, {90, 90, 90});
    r.pseudo_label = Car(rng, 0, 20);
    r.pseudo_label.bbox2d = r.crop_rect.ToRect();
    r.source_calib.p = {721.5377, 0, 609.5593, 44.85728, 0, 721.5377, 172.854, 0.2163791, 0, 0, 1, 0.002745884};
    db.records.push_back(r);
  }
  mix::Target t;
  t.kind = mix::TargetKind::kBackground;
  t.image = Image(1242, 375, {30, 30, 30});
  t.calib = db.records[0].source_calib;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(mix::ComposeMixedImage(t, db, 6, mix::MixConfig{}, seed++));
}
BENCHMARK(BM_ComposeMixedImage);

void BM_FormatParseLabels(benchmark::State& state) {
  Rng rng(5);
  std::vector<Box3D> boxes;
  for (int i = 0; i < 64; ++i) boxes.push_back(Car(rng, rng.UniformReal(-20, 20), rng.UniformReal(5, 60)));
  for (auto _ : state) benchmark::DoNotOptimize(kitti::ParseLabelText(kitti::FormatLabelText(boxes)));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_FormatParseLabels);

}  // namespace
BENCHMARK_MAIN();
