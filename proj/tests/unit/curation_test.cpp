#include <gtest/gtest.h>

#include "mixteach/errors.hpp"
#include "mixteach/label_curation.hpp"
#include "mixteach/rng.hpp"
#include "test_support.hpp"

namespace mixteach::curation {
namespace {

using ensemble::ModelBox;
using ensemble::ScoredBox;
using testing::MakeBox;

ScoredBox Sb(double score, double u, const std::string& cat = "Car") {
  return {MakeBox(cat, 0, 1.6, 20, 1.5, 1.6, 4.0, 0, score), u};
}

TEST(Filters, StrictBoundaries) {
  const CurationConfig cfg;
  const std::vector<ScoredBox> in = {Sb(0.70, 0.1), Sb(0.7000001, 0.1), Sb(0.9, 0.25), Sb(0.9, 0.2499999)};
  const auto conf = ConfidenceFilter(in, cfg);
  ASSERT_EQ(conf.size(), 3u);
  EXPECT_EQ(conf[0].box.score, 0.7000001);
  const auto unc = UncertaintyFilter(in, cfg);
  ASSERT_EQ(unc.size(), 3u);
  const auto both = CuratePseudoLabels(in, cfg);
  ASSERT_EQ(both.size(), 2u);
  EXPECT_EQ(both[0].box.score, 0.7000001);
  EXPECT_EQ(both[1].uncertainty, 0.2499999);
}

TEST(Filters, ComposedFilterIsIntersection) {
  Rng rng(4);
  std::vector<ScoredBox> in;
  for (int i = 0; i < 500; ++i) {
    in.push_back(Sb(std::round(rng.Uniform() * 100) / 100, std::round(rng.Uniform() * 100) / 100,
                    i % 7 == 0 ? "Van" : "Car"));
  }
  const CurationConfig cfg;
  const auto both = CuratePseudoLabels(in, cfg);
  std::size_t expected = 0;
  for (const auto& s : in) {
    const bool keep = *s.box.score > 0.7 && s.uncertainty < 0.25 && s.box.category.name() == "Car";
    expected += keep;
  }
  EXPECT_EQ(both.size(), expected);
  const auto conf_then_unc = UncertaintyFilter(ConfidenceFilter(in, cfg), cfg);
  EXPECT_LE(both.size(), conf_then_unc.size());
  for (const auto& s : both) {
    EXPECT_GT(*s.box.score, 0.7);
    EXPECT_LT(s.uncertainty, 0.25);
  }
}

TEST(Validate, ThresholdRanges) {
  CurationConfig cfg;
  cfg.conf_thr = 1.5;
  EXPECT_THROW(Validate(cfg), ValidationError);
  cfg = {};
  cfg.unc_thr = -0.1;
  EXPECT_THROW(Validate(cfg), ValidationError);
  EXPECT_NO_THROW(Validate(CurationConfig{}));
}

TEST(ExistenceTest, RawPredictionsDecideByDefault) {
  ensemble::EnsemblePredictions none{"a", 5, {}};
  EXPECT_TRUE(IsBackground(none));
  ensemble::EnsemblePredictions one{"b", 5, {ModelBox{4, MakeBox("Car", 0, 1, 10, 1, 1, 1, 0, 0.05)}}};
  EXPECT_FALSE(IsBackground(one));

  ScoredFrame sf{one, {Sb(0.05, 0.96)}};
  EXPECT_FALSE(IsBackground(sf, CurationConfig{}));
  CurationConfig filtered;
  filtered.existence_uses_filtered = true;
  EXPECT_TRUE(IsBackground(sf, filtered));
}

TEST(CropWindow, ExpandsAndClamps) {
  Box3D b = MakeBox("Car", 0, 1.6, 20, 1.5, 1.6, 4.0);
  b.bbox2d = {10.4, 20.6, 30.2, 40.0};
  EXPECT_EQ(CropWindow(b, testing::KittiP2(), 100, 100), (PixelRect{10, 20, 31, 40}));
  b.bbox2d = {-5, -5, 30.5, 200};
  EXPECT_EQ(CropWindow(b, testing::KittiP2(), 100, 100), (PixelRect{0, 0, 31, 100}));
  b.bbox2d = {120, 10, 150, 20};
  EXPECT_FALSE(CropWindow(b, testing::KittiP2(), 100, 100).has_value());
}

TEST(CropWindow, FallsBackToProjection) {
  Box3D b = MakeBox("Car", 0, 1.6, 20, 1.5, 1.6, 4.0);
  b.bbox2d = {};
  const auto w = CropWindow(b, testing::KittiP2(), 1242, 375);
  ASSERT_TRUE(w.has_value());
  const Rect r = geometry::ProjectToImage(b, testing::KittiP2());
  EXPECT_EQ(w->x0, int(std::floor(r.left)));
  EXPECT_EQ(w->y1, int(std::ceil(r.bottom)));
  b.location.z = -10;
  EXPECT_FALSE(CropWindow(b, testing::KittiP2(), 1242, 375).has_value());
}

// Frames 000000..000009 unlabeled, "L0" labeled; 64x48 images with a pixel
// pattern that identifies each location.
struct Fixture {
  testing::TempDir dir{"cur"};
  kitti::DatasetManifest manifest;
  std::vector<ScoredFrame> frames;

  static Image Pattern(int seed) {
    Image img(64, 48);
    for (int y = 0; y < 48; ++y) {
      for (int x = 0; x < 64; ++x) img.set(x, y, {std::uint8_t(x * 4), std::uint8_t(y * 5), std::uint8_t(seed)});
    }
    return img;
  }

  kitti::Frame MakeFrame(const std::string& id, kitti::Split split, int seed) {
    kitti::Frame f;
    f.frame_id = id;
    f.image_path = dir / ("images/" + id + ".png");
    f.calib = testing::KittiP2();
    f.split = split;
    WritePng(Pattern(seed), f.image_path);
    if (split == kitti::Split::kLabeled) f.labels = std::vector<Box3D>{};
    return f;
  }

  Fixture() {
    std::filesystem::create_directories(dir / "images");
    manifest.labeled_frames.push_back(MakeFrame("L0", kitti::Split::kLabeled, 99));
    for (int i = 0; i < 10; ++i) {
      const std::string id = "00000" + std::to_string(i);
      manifest.unlabeled_frames.push_back(MakeFrame(id, kitti::Split::kUnlabeled, i));
      ScoredFrame sf;
      sf.predictions = {id, 5, {}};
      frames.push_back(sf);
    }
  }
};

TEST(InstanceDatabase, OneRecordPerCuratedBox) {
  Fixture fx;
  Box3D kept = MakeBox("Car", 0, 1.6, 20, 1.5, 1.6, 4.0, 0, 0.9);
  kept.bbox2d = {4, 6, 20, 16};
  Box3D second = kept;
  second.bbox2d = {40, 30, 64, 48};
  Box3D outside = kept;
  outside.bbox2d = {100, 100, 120, 120};
  fx.frames[2].scored = {{kept, 0.1}, {kept, 0.5}, {outside, 0.0}};
  fx.frames[5].scored = {{second, 0.2}};
  for (auto& f : fx.frames) {
    for (const auto& s : f.scored) f.predictions.boxes.push_back({0, s.box});
  }

  const auto db = BuildInstanceDatabase(fx.manifest, fx.frames, {}, fx.dir / "inst");
  ASSERT_EQ(db.records.size(), 2u);
  const auto& r0 = db.records[0];
  EXPECT_EQ(r0.source_frame_id, "000002");
  EXPECT_EQ(r0.crop_rect, (PixelRect{4, 6, 20, 16}));
  EXPECT_EQ(r0.patch, Fixture::Pattern(2).Crop(4, 6, 16, 10));
  EXPECT_EQ(r0.uncertainty, 0.1);
  EXPECT_EQ(r0.pseudo_label, kept);
  EXPECT_EQ(db.records[1].source_frame_id, "000005");

  const auto loaded = LoadInstanceDatabase(fx.dir / "inst");
  ASSERT_EQ(loaded.records.size(), 2u);
  EXPECT_EQ(loaded.records[0].patch, r0.patch);
  EXPECT_EQ(loaded.records[0].pseudo_label, r0.pseudo_label);
  EXPECT_EQ(loaded.records[1].crop_rect, db.records[1].crop_rect);
  EXPECT_EQ(loaded.records[1].source_calib, testing::KittiP2());

  BuildInstanceDatabase(fx.manifest, fx.frames, {}, fx.dir / "inst2", 3);
  EXPECT_EQ(testing::CompareTrees(fx.dir / "inst", fx.dir / "inst2"), "");
}

TEST(BackgroundDatabase, EmptyUnlabeledFramesOnly) {
  Fixture fx;
  for (std::size_t i = 0; i < fx.frames.size(); ++i) {
    if (i == 1 || i == 4 || i == 8) continue;
    fx.frames[i].predictions.boxes.push_back({1, MakeBox("Car", 0, 1, 10, 1, 1, 1, 0, 0.1)});
  }
  ScoredFrame labeled;
  labeled.predictions = {"L0", 5, {}};
  fx.frames.push_back(labeled);

  const auto db = BuildBackgroundDatabase(fx.manifest, fx.frames, {}, fx.dir / "bg");
  ASSERT_EQ(db.records.size(), 3u);
  EXPECT_EQ(db.records[0].frame_id, "000001");
  EXPECT_EQ(db.records[1].frame_id, "000004");
  EXPECT_EQ(db.records[2].frame_id, "000008");

  const auto loaded = LoadBackgroundDatabase(fx.dir / "bg");
  ASSERT_EQ(loaded.records.size(), 3u);
  EXPECT_EQ(loaded.records[2].calib, testing::KittiP2());
  EXPECT_EQ(ReadPng(loaded.records[1].image_path), Fixture::Pattern(4));
}

TEST(LoadDatabase, MissingDirectory) {
  testing::TempDir dir;
  try {
    LoadInstanceDatabase(dir / "none");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFileNotFound);
  }
}

}  // namespace
}  // namespace mixteach::curation
