#pragma once

// KITTI object-benchmark text formats: label / prediction files, calibration
// files, and dataset scanning into a manifest of labeled and unlabeled frames.

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mixteach/geometry3d.hpp"

namespace mixteach::kitti {

namespace fs = std::filesystem;

enum class Split { kLabeled, kUnlabeled };

std::string_view SplitName(Split split);

struct Frame {
  std::string frame_id;
  fs::path image_path;
  fs::path calib_path;
  CameraProjection calib;
  Split split = Split::kUnlabeled;
  // Present iff split == kLabeled (possibly empty).
  std::optional<fs::path> label_path;
  std::optional<std::vector<Box3D>> labels;
};

struct DatasetManifest {
  std::vector<Frame> labeled_frames;
  std::vector<Frame> unlabeled_frames;

  std::size_t n_l() const noexcept { return labeled_frames.size(); }
  std::size_t n_u() const noexcept { return unlabeled_frames.size(); }
  const Frame* Find(std::string_view frame_id) const;
};

struct OrphanFrame {
  std::string frame_id;
  std::string missing;  // "image", "calib"
};

struct ScanResult {
  DatasetManifest manifest;
  std::vector<OrphanFrame> orphans;
};

// Parses one label line (15 fields, or 16 with a trailing score).
Box3D ParseLabelLine(std::string_view line, std::size_t line_no = 1);

// Blank lines are skipped. Throws MalformedLineError or Error(kFileNotFound).
std::vector<Box3D> ParseLabelText(std::string_view text);
std::vector<Box3D> ParseLabelFile(const fs::path& path);

// Canonical line: reals with 2 decimals, score with 4, occluded as integer,
// single-space separated, no trailing newline.
std::string FormatLabelLine(const Box3D& box);
std::string FormatLabelText(const std::vector<Box3D>& boxes);
// Same field layout with every real in its shortest exact decimal form.
std::string FormatLabelLineExact(const Box3D& box);

// Canonical output writes FormatLabelText; non-canonical writes every real in
// its shortest exact form (lossless). Throws Error(kIoFailure).
void WriteLabelFile(const std::vector<Box3D>& boxes, const fs::path& path,
                    bool canonical_format = true);

// Reads the "P2:" line. Throws Error(kMissingP2) / Error(kMalformedCalib) /
// Error(kFileNotFound).
CameraProjection ParseCalibText(std::string_view text);
CameraProjection ParseCalibFile(const fs::path& path);

struct ScanOptions {
  fs::path labeled_dir;    // <frame_id>.txt label files
  fs::path image_dir;      // <frame_id>.png for every frame
  fs::path calib_dir;      // <frame_id>.txt for every frame
  // When set, the stems of the files in this directory are the unlabeled
  // frames. When empty, every image without a label file is unlabeled.
  fs::path unlabeled_dir;
  // Frame ids never admitted as unlabeled (e.g. raw frames that duplicate
  // benchmark frames).
  std::set<std::string> unlabeled_exclusions;
};

// Frames are matched by shared file stem and sorted lexicographically by id.
// Frames missing an image or calibration are reported as orphans and skipped.
ScanResult ScanDataset(const ScanOptions& options);

// Line-oriented manifest, schema header "# mixteach dataset-manifest v1".
void WriteManifest(const DatasetManifest& manifest, const fs::path& path);
DatasetManifest ReadManifest(const fs::path& path);

// Reads a whole file into a string. Throws Error(kFileNotFound)/(kIoFailure).
std::string ReadTextFile(const fs::path& path);
// Writes bytes verbatim, creating parent directories.
void WriteTextFile(const fs::path& path, std::string_view content);

}  // namespace mixteach::kitti
