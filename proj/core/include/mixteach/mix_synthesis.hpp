#pragma once

// Mixed-image synthesis: instance patches from the instance database are
// pasted, at the position they were cropped from, onto either a labeled frame
// or an empty background frame. Each paste must pass a 2D collision test and
// gets box-level augmentations (border cut, colour padding, mixup) first.
//
// Every random decision for sample i comes from streams derived from
// (master_seed, i), so outputs do not depend on thread scheduling.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mixteach/image.hpp"
#include "mixteach/kitti_io.hpp"
#include "mixteach/label_curation.hpp"
#include "mixteach/rng.hpp"

namespace mixteach::mix {

namespace fs = std::filesystem;

struct MixConfig {
  double p_background = 0.42;
  double p_border_cut = 0.5;
  double p_color_pad = 0.5;
  double border_cut_ratio_min = 0.0;
  double border_cut_ratio_max = 0.3;
  double mixup_weight_min = 0.6;
  double mixup_weight_max = 1.0;
  double collision_iou_thr = 0.1;
  int max_paste_attempts = 8;
  int paste_count_min = 2;
  int paste_count_max = 6;
  // Pastes whose crop keeps less than this fraction of its area inside the
  // target image count as failed attempts.
  double min_visible_fraction = 0.5;
  double calib_tolerance = 1e-6;
  std::uint64_t master_seed = 0;
};

void Validate(const MixConfig& cfg);

enum class TargetKind { kLabeled, kBackground };
enum class LabelOrigin { kHuman, kPseudo };
enum class Side { kLeft = 0, kRight = 1, kTop = 2, kBottom = 3 };

std::string_view TargetKindName(TargetKind kind);
std::string_view LabelOriginName(LabelOrigin origin);

// A drawn target before its image is loaded.
struct TargetRef {
  TargetKind kind = TargetKind::kLabeled;
  std::size_t index = 0;  // into the labeled frames or the background records
};

struct Target {
  TargetKind kind = TargetKind::kLabeled;
  std::string frame_id;
  Image image;
  std::vector<Box3D> labels;  // human labels; empty for backgrounds
  CameraProjection calib;
};

struct MixedLabel {
  Box3D box;
  LabelOrigin origin = LabelOrigin::kHuman;
  friend bool operator==(const MixedLabel&, const MixedLabel&) = default;
};

struct MixedSample {
  Image image;
  std::vector<MixedLabel> labels;
  TargetKind target_kind = TargetKind::kLabeled;
  std::string target_frame_id;
  std::vector<std::string> pasted_record_ids;
  CameraProjection calib;
  std::uint64_t sample_seed = 0;
};

// Background with probability p_background, else a labeled frame; uniform
// within the chosen pool. When the chosen pool is empty the other one is
// used. Throws Error(kEmptyPools) when both are empty.
TargetRef SampleTarget(Rng& rng, std::span<const kitti::Frame> labeled,
                       const curation::BackgroundDatabase& backgrounds, const MixConfig& cfg);

// Loads the target's image and human labels.
Target LoadTarget(const TargetRef& ref, std::span<const kitti::Frame> labeled,
                  const curation::BackgroundDatabase& backgrounds);

// Accept iff every existing rect has 2D IoU <= collision_iou_thr with the
// candidate.
bool CollisionTest(const Rect& candidate, std::span<const Rect> existing, const MixConfig& cfg);

// Number of pixels removed from a side of `length` pixels.
int CutPixels(int length, double ratio);

// Removes floor(ratio * side length) pixels from one border. Throws
// Error(kInvalidArgument) for ratio outside [0, 0.3] and
// Error(kPatchTooSmall) if nothing would remain.
Image BorderCut(const Image& patch, double ratio, Side side);

// Like BorderCut but the strip is overwritten with `color`; size unchanged.
Image ColorPad(const Image& patch, double ratio, Side side, Rgb color);

// w * fg + (1 - w) * bg per channel, rounded to nearest. Throws
// Error(kShapeMismatch) on differing sizes, Error(kInvalidArgument) for w
// outside [0, 1].
Image MixupBlend(const Image& fg, const Image& bg_region, double w);

// Pastes up to k_paste records onto the target. Throws
// Error(kEmptyInstanceDatabase) and Error(kCalibrationMismatch).
MixedSample ComposeMixedImage(const Target& target, const curation::InstanceDatabase& instances,
                              int k_paste, const MixConfig& cfg, std::uint64_t sample_seed);

struct SampleSummary {
  std::string sample_id;
  TargetKind target_kind = TargetKind::kLabeled;
  std::string target_frame_id;
  std::uint64_t sample_seed = 0;
  std::size_t n_human = 0;
  std::size_t n_pseudo = 0;
  std::vector<std::string> pasted_record_ids;
};

struct EpochResult {
  std::vector<SampleSummary> samples;
  fs::path manifest_path;
};

// Sample seed for index i under the config's master seed.
std::uint64_t SampleSeed(std::uint64_t master_seed, std::size_t index);

// Draws target and paste count for one sample and composes it.
MixedSample GenerateSample(std::span<const kitti::Frame> labeled,
                           const curation::InstanceDatabase& instances,
                           const curation::BackgroundDatabase& backgrounds, const MixConfig& cfg,
                           std::uint64_t sample_seed);

// Writes <out>/images/<id>.png, <out>/labels/<id>.txt, <out>/origins/<id>.txt
// and <out>/epoch_manifest.txt, replacing earlier outputs in those places.
EpochResult GenerateEpoch(std::span<const kitti::Frame> labeled,
                          const curation::InstanceDatabase& instances,
                          const curation::BackgroundDatabase& backgrounds, const MixConfig& cfg,
                          std::size_t count, const fs::path& out_dir, unsigned workers = 1);

}  // namespace mixteach::mix
