#pragma once

// Pseudo-label curation: confidence / uncertainty filters, the object
// existence test, and the on-disk instance and background databases.
//
// Instance database layout:
//   <db>/VERSION            schema version ("1")
//   <db>/index.txt          one record per line, see kInstanceIndexHeader
//   <db>/patches/<id>.png   lossless crop of the source image
//
// Background database layout:
//   <db>/VERSION
//   <db>/index.txt          frame id, image path (relative to <db>), P2

#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mixteach/ensemble_uncertainty.hpp"
#include "mixteach/image.hpp"
#include "mixteach/kitti_io.hpp"

namespace mixteach::curation {

namespace fs = std::filesystem;

inline constexpr int kDatabaseSchemaVersion = 1;

struct CurationConfig {
  double conf_thr = 0.7;
  double unc_thr = 0.25;
  std::set<std::string> categories{"Car", "Pedestrian", "Cyclist"};
  // Background test on post-filter boxes instead of raw predictions.
  bool existence_uses_filtered = false;
};

void Validate(const CurationConfig& cfg);

// Integer pixel window [x0, x1) x [y0, y1).
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const noexcept { return x1 - x0; }
  int height() const noexcept { return y1 - y0; }
  Rect ToRect() const;
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

struct InstanceRecord {
  std::string record_id;
  Image patch;
  Box3D pseudo_label;
  double uncertainty = 0.0;
  std::string source_frame_id;
  CameraProjection source_calib;
  PixelRect crop_rect;
};

struct InstanceDatabase {
  fs::path root;
  int schema_version = kDatabaseSchemaVersion;
  std::vector<InstanceRecord> records;
};

struct BackgroundRecord {
  std::string frame_id;
  fs::path image_path;
  CameraProjection calib;
};

struct BackgroundDatabase {
  fs::path root;
  int schema_version = kDatabaseSchemaVersion;
  std::vector<BackgroundRecord> records;
};

// Ensemble output for one unlabeled frame: raw predictions and their
// clustered (representative, u) pairs.
struct ScoredFrame {
  ensemble::EnsemblePredictions predictions;
  std::vector<ensemble::ScoredBox> scored;
};

// score > conf_thr (strict).
std::vector<ensemble::ScoredBox> ConfidenceFilter(std::span<const ensemble::ScoredBox> scored,
                                                  const CurationConfig& cfg);
// u < unc_thr (strict).
std::vector<ensemble::ScoredBox> UncertaintyFilter(std::span<const ensemble::ScoredBox> scored,
                                                   const CurationConfig& cfg);
// Both filters plus the category allow-list, input order preserved.
std::vector<ensemble::ScoredBox> CuratePseudoLabels(std::span<const ensemble::ScoredBox> scored,
                                                    const CurationConfig& cfg);

// True iff no model produced any prediction on the frame.
bool IsBackground(const ensemble::EnsemblePredictions& preds);
// Applies cfg.existence_uses_filtered.
bool IsBackground(const ScoredFrame& frame, const CurationConfig& cfg);

// Crop window for a pseudo label: its 2D box when valid, else the projected
// 3D box; expanded to whole pixels and clamped to the image. Returns nullopt
// when nothing of the box lies inside the image.
std::optional<PixelRect> CropWindow(const Box3D& box, const CameraProjection& calib, int image_width,
                                    int image_height);

// One record per curated box of every unlabeled frame in `frames`. Boxes
// whose crop falls outside the image are skipped with a warning. Replaces any
// previous database at `out_dir`.
InstanceDatabase BuildInstanceDatabase(const kitti::DatasetManifest& manifest,
                                       std::span<const ScoredFrame> frames,
                                       const CurationConfig& cfg, const fs::path& out_dir,
                                       unsigned workers = 1);

// One record per unlabeled frame that passes the existence test. Labeled
// frames never enter.
BackgroundDatabase BuildBackgroundDatabase(const kitti::DatasetManifest& manifest,
                                           std::span<const ScoredFrame> frames,
                                           const CurationConfig& cfg, const fs::path& out_dir);

// Loads records and patch rasters. Throws Error(kFileNotFound) / (kParseError).
InstanceDatabase LoadInstanceDatabase(const fs::path& dir);
BackgroundDatabase LoadBackgroundDatabase(const fs::path& dir);

}  // namespace mixteach::curation
