#pragma once

// Stage orchestration. One stage turns a teacher ensemble's predictions on the
// unlabeled frames into curated pseudo labels, the two databases, a mixed
// epoch and (when ground truth for the unlabeled frames is configured) a
// metrics report. Training the student happens outside; its ensemble's
// predictions feed the next stage through [stage.K] prediction_dirs.
//
// Stage directory <output_root>/stage_<K>:
//   dataset_manifest.txt  pseudo_labels/  instance_db/  background_db/
//   mixed/  report.txt  calibration.csv (with GT)  config.resolved.ini
//   stage_manifest.txt

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mixteach/config.hpp"
#include "mixteach/ensemble_uncertainty.hpp"
#include "mixteach/evaluation.hpp"
#include "mixteach/kitti_io.hpp"
#include "mixteach/label_curation.hpp"

namespace mixteach::pipeline {

inline constexpr int kStageManifestSchemaVersion = 1;

// Scan using the configured directories and exclusion list.
kitti::DatasetManifest ScanFromConfig(const PipelineConfig& cfg);

// Throws Error(kMissingPredictions) naming every model directory that lacks
// files for some frames (or does not exist), with the missing frame ids.
void CheckPredictions(std::span<const fs::path> model_dirs, std::span<const kitti::Frame> frames);

// Ensemble scoring of every unlabeled frame, in manifest order.
std::vector<curation::ScoredFrame> ScoreFrames(const kitti::DatasetManifest& manifest,
                                               std::span<const fs::path> model_dirs,
                                               const ensemble::UncertaintyConfig& cfg,
                                               unsigned workers = 1);

// Curated pseudo labels of one scored frame, as label boxes.
std::vector<Box3D> CuratedBoxes(const curation::ScoredFrame& frame, const curation::CurationConfig& cfg);

// Writes <dir>/<frame_id>.txt for every scored frame (possibly empty files).
void WritePseudoLabels(const kitti::DatasetManifest& manifest,
                       std::span<const curation::ScoredFrame> frames,
                       const curation::CurationConfig& cfg, const fs::path& dir);

// Ground truth for each unlabeled frame from gt_dir; a missing file gives an
// empty list with a warning.
std::vector<std::vector<Box3D>> LoadGroundTruth(const kitti::DatasetManifest& manifest,
                                                const fs::path& gt_dir);

std::vector<ensemble::CalibrationRow> CalibrationStats(std::span<const curation::ScoredFrame> frames,
                                                       std::span<const std::vector<Box3D>> gt);

// Hex SHA-256.
std::string Sha256Hex(std::string_view bytes);

// Text stored as config.resolved.ini. `workers` is normalized to 1 since it
// never changes outputs.
std::string StoredConfigText(const PipelineConfig& cfg);

struct StageCounts {
  std::size_t labeled_frames = 0;
  std::size_t unlabeled_frames = 0;
  std::size_t scored_boxes = 0;
  std::size_t pseudo_labels = 0;
  std::size_t instances = 0;
  std::size_t backgrounds = 0;
  std::size_t mixed_samples = 0;
};

struct StageManifest {
  int schema_version = kStageManifestSchemaVersion;
  int stage_index = 1;
  std::uint64_t master_seed = 0;
  std::string config_hash;  // sha256 of config.resolved.ini
  std::vector<fs::path> prediction_dirs;
  // Relative to the stage directory.
  fs::path config_path;
  fs::path dataset_manifest;
  fs::path pseudo_labels;
  fs::path instance_db;
  fs::path background_db;
  fs::path mixed_dir;
  fs::path report;
  std::optional<fs::path> calibration;
  StageCounts counts;
};

fs::path StageDir(const PipelineConfig& cfg, int stage_index);

std::string FormatStageManifest(const StageManifest& m);
StageManifest ParseStageManifest(std::string_view text);

// Runs stage `stage_index` (1-based) of `cfg` with its overrides applied.
// Output goes to a temporary sibling first and replaces StageDir on success;
// on failure nothing of this run is left behind.
StageManifest RunStage(const PipelineConfig& cfg, int stage_index);

struct VerifyResult {
  bool ok = false;
  std::vector<std::string> problems;
};

// Recomputes the stored config's hash and checks that every listed artifact
// exists.
VerifyResult VerifyStage(const fs::path& stage_dir);

}  // namespace mixteach::pipeline
