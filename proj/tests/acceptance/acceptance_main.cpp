// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

#include "mixteach/config.hpp"
#include "mixteach/ensemble_uncertainty.hpp"
#include "mixteach/evaluation.hpp"
#include "mixteach/kitti_io.hpp"
#include "mixteach/label_curation.hpp"
#include "mixteach/log.hpp"
#include "mixteach/mix_synthesis.hpp"
#include "mixteach/rng.hpp"
#include "synthetic.hpp"
#include "test_support.hpp"

namespace mt = mixteach;
namespace fs = std::filesystem;
using mt::Box3D;
using mt::Rng;
using mt::testing::MakeBox;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

std::string Fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

// 1. iou3d against the voxel oracle.
Outcome GeometryOracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20240601);
  constexpr double kPi = std::numbers::pi;
  auto random_box = [&] {
    return MakeBox("Car", rng.UniformReal(-5, 5), rng.UniformReal(0, 2), rng.UniformReal(5, 30),
                   rng.UniformReal(0.5, 2.5), rng.UniformReal(0.5, 2.5), rng.UniformReal(0.5, 5),
                   rng.UniformReal(-kPi, kPi));
  };
  double worst = 0.0;
  int overlapping = 0;
  for (int i = 0; i < 1000; ++i) {
    const Box3D a = random_box();
    Box3D b = a;
    if (rng.Bernoulli(0.8)) {
      b.location.x += rng.UniformReal(-1, 1);
      b.location.y += rng.UniformReal(-0.5, 0.5);
      b.location.z += rng.UniformReal(-1, 1);
      b.dimensions.h *= rng.UniformReal(0.7, 1.3);
      b.dimensions.w *= rng.UniformReal(0.7, 1.3);
      b.dimensions.l *= rng.UniformReal(0.7, 1.3);
      b.rotation_y += rng.UniformReal(-0.8, 0.8);
    } else {
      b = random_box();
    }
    const double got = mt::geometry::Iou3d(a, b);
    overlapping += got > 0.0;
    worst = std::max(worst, std::abs(got - mt::testing::VoxelIou3d(a, b)));
  }
  const double secs = Seconds(t0);
  return {worst <= 1e-3 && secs < 60.0 && overlapping > 500,
          Fmt("1000 pairs, max |err| %.2e, %.0f overlapping, %.1f s", worst, overlapping, secs)};
}

// 2. u = 1 - M^2/25 for M identical boxes.
Outcome UncertaintyLaw() {
  const mt::ensemble::UncertaintyConfig cfg;
  double worst = 0.0;
  std::vector<mt::ensemble::ModelBox> members;
  for (std::size_t m = 1; m <= 5; ++m) {
    members.push_back({m - 1, MakeBox("Car", 1.2, 1.6, 18.4, 1.5, 1.6, 3.9, 0.3, 0.9)});
    const double u = mt::ensemble::ClusterUncertainty(members, 5, cfg);
    worst = std::max(worst, std::abs(u - (1.0 - double(m * m) / 25.0)));
  }
  const double u5 = mt::ensemble::ClusterUncertainty(members, 5, cfg);
  const double empty = mt::ensemble::ClusterUncertainty(std::span<const mt::ensemble::ModelBox>{}, 5, cfg);
  return {worst <= 1e-12 && std::abs(u5) <= 1e-12 && empty == 1.0,
          Fmt("max |err| %.1e over M=1..5, u(5)=%.1e, u(empty)=%.0f", worst, u5, empty)};
}

// 3. Committed hand trace plus a randomized partition check.
Outcome Clustering() {
  using namespace mt::ensemble;
  const auto fx = mt::testing::LoadClusteringFixture(mt::testing::FixtureDir() / "clustering_trace.txt");
  EnsemblePredictions p{"trace", fx.n_models, fx.boxes};
  const auto clusters = ClusterPredictions(p, {});
  const auto scored = ScoreFrame(p, {});
  bool trace_ok = clusters.size() == fx.clusters.size() && fx.boxes.size() == 12;
  for (std::size_t c = 0; trace_ok && c < clusters.size(); ++c) {
    trace_ok = clusters[c].members.size() == fx.clusters[c].members.size() &&
               std::abs(scored[c].uncertainty - fx.clusters[c].u) <= 1e-9 &&
               scored[c].box == fx.boxes[fx.clusters[c].members[0]].box;
    for (std::size_t i = 0; trace_ok && i < clusters[c].members.size(); ++i) {
      const ModelBox& want = fx.boxes[fx.clusters[c].members[i]];
      trace_ok = clusters[c].members[i].model_index == want.model_index && clusters[c].members[i].box == want.box;
    }
  }

  Rng rng(77);
  const UncertaintyConfig cfg;
  std::size_t total = 0, placed = 0, violations = 0;
  for (int frame = 0; frame < 20; ++frame) {
    EnsemblePredictions fp{"r", 5, {}};
    while (fp.boxes.size() < 500) {
      const double x = rng.UniformReal(-30, 30), z = rng.UniformReal(5, 80);
      const char* cat = rng.Bernoulli(0.25) ? "Pedestrian" : "Car";
      for (std::size_t k = 0; k < 5 && fp.boxes.size() < 500; ++k) {
        if (rng.Bernoulli(0.25)) continue;
        fp.boxes.push_back({k, MakeBox(cat, x + rng.Normal(0, 0.4), 1.6, z + rng.Normal(0, 0.4), 1.5, 1.6, 4.0,
                                       rng.Normal(0, 0.15), std::round(rng.Uniform() * 100) / 100)});
      }
    }
    total += fp.boxes.size();
    std::multiset<std::tuple<std::size_t, double, double, double>> in, out;
    for (const auto& b : fp.boxes) in.insert({b.model_index, b.box.location.x, b.box.location.z, *b.box.score});
    for (const auto& c : ClusterPredictions(fp, cfg)) {
      for (std::size_t i = 0; i < c.members.size(); ++i) {
        const auto& b = c.members[i];
        out.insert({b.model_index, b.box.location.x, b.box.location.z, *b.box.score});
        if (i > 0 && !(mt::geometry::Iou3d(b.box, c.seed().box) > cfg.cluster_iou_thr)) ++violations;
      }
    }
    placed += out.size();
    if (in != out) ++violations;
  }
  return {trace_ok && total == 10000 && placed == total && violations == 0,
          std::string(trace_ok ? "hand trace matches" : "hand trace MISMATCH") + Fmt(
              "; %.0f boxes partitioned, %.0f violations", double(total), double(violations))};
}

// 4. Composed filter is exactly {score > 0.7 and u < 0.25}.
Outcome FilterFidelity() {
  Rng rng(4);
  std::vector<mt::ensemble::ScoredBox> boxes;
  auto add = [&](double s, double u) { boxes.push_back({MakeBox("Car", 0, 1.6, 20, 1.5, 1.6, 4.0, 0, s), u}); };
  add(0.70, 0.10);
  add(0.90, 0.25);
  add(0.70, 0.25);
  add(0.71, 0.24);
  while (boxes.size() < 200) {
    add(double(rng.UniformInt(60, 80)) / 100.0, double(rng.UniformInt(15, 35)) / 100.0);
  }
  const auto kept = mt::curation::CuratePseudoLabels(boxes, {});
  std::vector<std::size_t> want;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (*boxes[i].box.score > 0.7 && boxes[i].uncertainty < 0.25) want.push_back(i);
  }
  bool same = kept.size() == want.size();
  for (std::size_t i = 0; same && i < want.size(); ++i) {
    same = kept[i].box == boxes[want[i]].box && kept[i].uncertainty == boxes[want[i]].uncertainty;
  }
  std::size_t boundary_kept = 0;
  for (const auto& k : kept) boundary_kept += (*k.box.score == 0.70 || k.uncertainty == 0.25);
  return {same && boundary_kept == 0 && !want.empty(),
          Fmt("%.0f of 200 kept, expected %.0f, boundary values kept: %.0f", double(kept.size()),
              double(want.size()), double(boundary_kept))};
}

// 5. Plain pastes are bit-exact, labels merge, no pair collides.
Outcome CompositionExactness() {
  using namespace mt::mix;
  Rng rng(55);
  const int W = 416, H = 128;
  mt::curation::InstanceDatabase db;
  for (int i = 0; i < 30; ++i) {
    const int w = int(rng.UniformInt(10, 60)), h = int(rng.UniformInt(8, 40));
    const int x0 = int(rng.UniformInt(0, W - w)), y0 = int(rng.UniformInt(0, H - h));
    mt::curation::InstanceRecord r;
    r.record_id = "rec" + std::to_string(i);
    r.crop_rect = {x0, y0, x0 + w, y0 + h};
    r.patch = mt::Image(w, h);
    for (auto& v : r.patch.data()) v = std::uint8_t(rng.UniformInt(0, 255));
    r.pseudo_label = MakeBox("Car", rng.UniformReal(-5, 5), 1.6, rng.UniformReal(10, 40), 1.5, 1.6, 4.0, 0, 0.9);
    r.pseudo_label.bbox2d = r.crop_rect.ToRect();
    r.source_calib = mt::testing::KittiP2();
    db.records.push_back(r);
  }
  MixConfig cfg;
  cfg.p_border_cut = cfg.p_color_pad = 0.0;
  cfg.mixup_weight_min = cfg.mixup_weight_max = 1.0;

  int samples = 0, pastes = 0, bad_pixels = 0, bad_labels = 0, collisions = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    Target t;
    t.kind = seed % 2 ? TargetKind::kLabeled : TargetKind::kBackground;
    t.frame_id = "t";
    t.calib = mt::testing::KittiP2();
    t.image = mt::Image(W, H);
    for (auto& v : t.image.data()) v = std::uint8_t(rng.UniformInt(0, 255));
    if (t.kind == TargetKind::kLabeled) {
      Box3D h = MakeBox("Pedestrian", 2, 1.6, 12, 1.7, 0.6, 0.8, 0.1);
      h.bbox2d = {300, 40, 330, 120};
      t.labels = {h, MakeBox("DontCare", 0, 0, 0, -1, -1, -1)};
      t.labels[1].bbox2d = {0, 0, 40, 30};
    }
    const auto s = ComposeMixedImage(t, db, 6, cfg, seed);
    ++samples;
    pastes += int(s.pasted_record_ids.size());

    std::vector<const mt::curation::InstanceRecord*> used;
    for (const auto& id : s.pasted_record_ids) {
      for (const auto& r : db.records) {
        if (r.record_id == id) used.push_back(&r);
      }
    }
    // Pixel ownership: the last paste covering a pixel, else the target.
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        mt::Rgb want = t.image.at(x, y);
        for (const auto* r : used) {
          const auto& c = r->crop_rect;
          if (x >= c.x0 && x < c.x1 && y >= c.y0 && y < c.y1) want = r->patch.at(x - c.x0, y - c.y0);
        }
        bad_pixels += !(s.image.at(x, y) == want);
      }
    }
    if (s.labels.size() != t.labels.size() + used.size()) ++bad_labels;
    for (std::size_t i = 0; i < s.labels.size() && i < t.labels.size() + used.size(); ++i) {
      if (i < t.labels.size()) {
        bad_labels += !(s.labels[i].box == t.labels[i] && s.labels[i].origin == LabelOrigin::kHuman);
      } else {
        bad_labels += !(s.labels[i].box == used[i - t.labels.size()]->pseudo_label &&
                        s.labels[i].origin == LabelOrigin::kPseudo);
      }
    }
    std::vector<mt::Rect> rects;
    if (t.kind == TargetKind::kLabeled) rects.push_back(t.labels[0].bbox2d);
    for (const auto* r : used) rects.push_back(r->pseudo_label.bbox2d);
    for (std::size_t i = 0; i < rects.size(); ++i) {
      for (std::size_t j = i + 1; j < rects.size(); ++j) {
        collisions += mt::geometry::Iou2d(rects[i], rects[j]) > cfg.collision_iou_thr;
      }
    }
  }
  return {bad_pixels == 0 && bad_labels == 0 && collisions == 0 && pastes > samples,
          Fmt("%.0f samples, %.0f pastes, mismatched pixels %.0f", samples, pastes, bad_pixels) +
              Fmt(", label errors %.0f, colliding pairs %.0f", bad_labels, collisions)};
}

std::string Cli(const std::string& args, const fs::path& log) {
  return mt::testing::CliPath() + " " + args + " > " + log.string() + " 2>&1";
}

// 6. `mix --count 50` is reproducible run to run and across worker counts.
Outcome Determinism() {
  mt::testing::TempDir dir("acc_mix");
  mt::synth::SceneConfig sc;
  sc.n_labeled = 10;
  sc.n_unlabeled = 60;
  mt::synth::WriteScene(mt::synth::GenerateScene(sc), dir.path());
  const std::string ini = (dir / "pipeline.ini").string();
  const fs::path out = dir / "mix_out";
  const fs::path log = dir / "log.txt";
  auto run = [&](const std::string& extra, const std::string& keep_as) {
    const int rc = mt::testing::RunCommand(
        Cli("mix --config " + ini + " --count 50 --out " + out.string() + " " + extra, log));
    if (rc != 0) throw std::runtime_error("mix exited " + std::to_string(rc) + ": " + mt::testing::ReadBytes(log));
    fs::rename(out, dir / keep_as);
  };
  run("", "run_a");
  run("", "run_b");
  run("--workers 1", "w1");
  run("--workers 8", "w8");
  run("--seed 8", "other_seed");
  const std::string ab = mt::testing::CompareTrees(dir / "run_a", dir / "run_b");
  const std::string w18 = mt::testing::CompareTrees(dir / "w1", dir / "w8");
  const bool seed_matters = !mt::testing::CompareTrees(dir / "run_a", dir / "other_seed").empty();
  std::size_t images = 0;
  for (const auto& e : fs::directory_iterator(dir / "run_a/images")) images += e.is_regular_file();
  return {ab.empty() && w18.empty() && seed_matters && images == 50,
          "rerun: " + (ab.empty() ? std::string("identical") : ab) +
              "; workers 1 vs 8: " + (w18.empty() ? std::string("identical") : w18) + Fmt("; %.0f images", double(images))};
}

// 7. AP40 on perfect, empty and committed fixtures.
Outcome Evaluator() {
  using namespace mt::eval;
  Rng rng(7);
  std::vector<FrameBoxes> frames(30);
  for (auto& f : frames) {
    const int n = int(rng.UniformInt(1, 4));
    for (int i = 0; i < n; ++i) {
      Box3D g = MakeBox("Car", -12 + 8 * i, 1.6, rng.UniformReal(10, 40), 1.5, 1.6, 4.0, rng.UniformReal(-1, 1));
      g.bbox2d = {100, 100, 150, 160};
      f.gts.push_back(g);
      g.score = rng.Uniform();
      f.preds.push_back(g);
    }
  }
  const double perfect = Ap40(frames, {}).ap;
  for (auto& f : frames) f.preds.clear();
  const double empty = Ap40(frames, {}).ap;
  const auto one = mt::testing::LoadApFixture(mt::testing::FixtureDir() / "ap_one_tp_one_fp.txt");
  const double fx1 = Ap40(one.frames, one.cfg).ap;
  const auto three = mt::testing::LoadApFixture(mt::testing::FixtureDir() / "ap_three_gt.txt");
  const double fx3 = Ap40(three.frames, three.cfg).ap;
  const bool ok = perfect == 100.0 && empty == 0.0 && std::abs(fx1 - one.expected_ap) <= 1e-9 &&
                  std::abs(fx3 - three.expected_ap) <= 1e-9;
  return {ok, Fmt("perfect %.6f, empty %.6f, 1-TP/1-FP fixture %.9f", perfect, empty, fx1) +
                  Fmt(", 3-GT fixture %.9f (hand %.9f)", fx3, three.expected_ap)};
}

// 8. Filters improve pseudo-label precision on the synthetic ensemble.
Outcome SyntheticImprovement() {
  const auto t0 = std::chrono::steady_clock::now();
  mt::testing::TempDir dir("acc_e2e");
  mt::synth::SceneConfig sc;
  sc.n_labeled = 20;
  sc.n_unlabeled = 200;
  sc.seed = 2024;
  const auto scene = mt::synth::GenerateScene(sc);
  mt::synth::WriteScene(scene, dir.path());
  const fs::path log = dir / "log.txt";
  const int rc = mt::testing::RunCommand(Cli("stage --config " + (dir / "pipeline.ini").string() + " --stage 1", log));
  if (rc != 0) return {false, "stage exited " + std::to_string(rc) + ": " + mt::testing::ReadBytes(log)};

  using mt::eval::FrameBoxes;
  std::vector<FrameBoxes> raw, conf, unc, both, cli;
  const mt::curation::CurationConfig ccfg;
  for (const auto& f : scene.frames) {
    if (f.labeled) continue;
    mt::ensemble::EnsemblePredictions p{f.frame_id, sc.n_models, {}};
    for (std::size_t m = 0; m < f.predictions.size(); ++m) {
      for (const auto& b : f.predictions[m]) p.boxes.push_back({m, b});
    }
    const auto scored = mt::ensemble::ScoreFrame(p, {});
    const auto gt = mt::synth::GroundTruth(f);
    auto boxes = [](const std::vector<mt::ensemble::ScoredBox>& s) {
      std::vector<Box3D> out;
      for (const auto& x : s) out.push_back(x.box);
      return out;
    };
    raw.push_back({boxes(scored), gt});
    conf.push_back({boxes(mt::curation::ConfidenceFilter(scored, ccfg)), gt});
    unc.push_back({boxes(mt::curation::UncertaintyFilter(scored, ccfg)), gt});
    both.push_back({boxes(mt::curation::CuratePseudoLabels(scored, ccfg)), gt});
    cli.push_back({mt::kitti::ParseLabelFile(dir / ("out/stage_1/pseudo_labels/" + f.frame_id + ".txt")), gt});
  }
  const auto pr = [](const std::vector<FrameBoxes>& v) { return mt::eval::PseudoLabelPr(v, 0.5); };
  auto count = [](const std::vector<FrameBoxes>& v) {
    std::size_t n = 0;
    for (const auto& f : v) n += f.preds.size();
    return double(n);
  };
  const double p_raw = pr(raw).precision, p_conf = pr(conf).precision, p_unc = pr(unc).precision;
  const double p_both = pr(both).precision, p_cli = pr(cli).precision;
  const double secs = Seconds(t0);
  const bool ok = !pr(both).precision_vacuous && p_cli == p_both && p_both >= p_raw + 0.10 && p_unc > p_conf &&
                  secs < 300.0;
  return {ok, Fmt("precision raw %.3f (%.0f boxes), confidence-only %.3f", p_raw, count(raw), p_conf) +
                  Fmt(", uncertainty-only %.3f (%.0f boxes)", p_unc, count(unc)) +
                  Fmt(", composed %.3f (%.0f boxes), %.1f s", p_both, count(both), secs)};
}

// 9. Canonical label files survive parse then write byte for byte.
Outcome KittiRoundTrip() {
  mt::testing::TempDir dir("acc_io");
  Rng rng(9);
  const char* cats[] = {"Car", "Pedestrian", "Cyclist", "Van", "Truck", "Misc"};
  auto cents = [&](long lo, long hi) {
    char buf[32];
    const long c = long(rng.UniformInt(lo, hi));
    std::snprintf(buf, sizeof(buf), "%.2f", double(c) / 100.0);
    return std::string(buf);
  };
  int identical = 0, lines = 0, scored = 0, dontcare = 0;
  for (int f = 0; f < 100; ++f) {
    std::string text;
    const int n = int(rng.UniformInt(0, 12));
    const bool with_score = f % 2 == 1;
    for (int i = 0; i < n; ++i) {
      std::string line;
      if (rng.Bernoulli(0.15)) {
        line = "DontCare -1.00 -1 -10.00 " + cents(0, 120000) + " " + cents(0, 37000) + " " + cents(0, 120000) + " " +
               cents(0, 37000) + " -1.00 -1.00 -1.00 -1000.00 -1000.00 -1000.00 -10.00";
        ++dontcare;
      } else {
        line = std::string(cats[rng.UniformInt(0, 5)]) + " " + cents(0, 100) + " " +
               std::to_string(rng.UniformInt(0, 3)) + " " + cents(-314, 314);
        for (int k = 0; k < 4; ++k) line += " " + cents(0, 120000);
        for (int k = 0; k < 3; ++k) line += " " + cents(30, 1200);
        line += " " + cents(-4000, 4000) + " " + cents(-300, 300) + " " + cents(-100, 8000) + " " + cents(-314, 314);
      }
      if (with_score) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), " %.4f", double(rng.UniformInt(0, 10000)) / 10000.0);
        line += buf;
        ++scored;
      }
      text += line + "\n";
      ++lines;
    }
    const fs::path in = dir / ("in_" + std::to_string(f) + ".txt");
    const fs::path out = dir / ("out_" + std::to_string(f) + ".txt");
    mt::kitti::WriteTextFile(in, text);
    mt::kitti::WriteLabelFile(mt::kitti::ParseLabelFile(in), out);
    identical += mt::testing::ReadBytes(out) == text;
  }
  return {identical == 100 && dontcare > 0 && scored > 0 && scored < lines,
          Fmt("%.0f/100 files identical, %.0f lines", identical, lines) +
              Fmt(" (%.0f with score, %.0f DontCare)", scored, dontcare)};
}

// 10. Loss fixtures and the default lambda.
Outcome LossAggregation() {
  using namespace mt::eval;
  int exact = 0;
  for (const char* name : {"loss_mixed.txt", "loss_backgrounds_only.txt", "loss_labeled_only.txt"}) {
    const auto f = mt::testing::LoadLossFixture(mt::testing::FixtureDir() / name);
    const double ls = SupervisedLoss(f.supervised);
    const double lu = UnsupervisedLoss(f.pseudo_on_labeled, f.pseudo_on_background);
    exact += ls == f.expected_supervised && lu == f.expected_unsupervised &&
             TotalLoss(ls, lu, {f.lambda}) == f.expected_total;
  }
  const auto cfg = mt::pipeline::ParseConfig(
      "[dataset]\nlabeled_dir = l\nimage_dir = i\ncalib_dir = c\n"
      "[ensemble]\nprediction_dirs = p\n[pipeline]\noutput_root = o\n",
      "/");
  return {exact == 3 && cfg.loss.lambda == 1.0,
          Fmt("%.0f/3 fixtures exact, default lambda %.1f", exact, cfg.loss.lambda)};
}

}  // namespace

int main() {
  mt::log::SetLevel(mt::log::Level::kError);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"geometry oracle equivalence", GeometryOracle},
      {"uncertainty law", UncertaintyLaw},
      {"clustering correctness", Clustering},
      {"filter fidelity", FilterFidelity},
      {"composition exactness", CompositionExactness},
      {"determinism", Determinism},
      {"evaluator sanity", Evaluator},
      {"synthetic end-to-end improvement", SyntheticImprovement},
      {"KITTI I/O round trip", KittiRoundTrip},
      {"loss aggregation", LossAggregation},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << (i + 1) << " (" << criteria[i].first
              << "): " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
