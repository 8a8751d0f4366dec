#pragma once

// Pipeline configuration: a flat INI-style file with one section per module.
//
//   [dataset]      labeled_dir image_dir calib_dir unlabeled_dir exclusion_list gt_dir
//   [ensemble]     prediction_dirs (comma separated, one per model)
//   [uncertainty]  cluster_iou_thr beta dedupe_same_model same_category_only
//   [curation]     conf_thr unc_thr categories existence_uses_filtered
//   [mix]          p_background p_border_cut p_color_pad border_cut_ratio_min
//                  border_cut_ratio_max mixup_weight_min mixup_weight_max
//                  collision_iou_thr max_paste_attempts paste_count_min
//                  paste_count_max min_visible_fraction calib_tolerance sample_count
//   [eval]         iou_thr metric categories
//   [loss]         lambda
//   [pipeline]     output_root stage_count master_seed workers
//   [stage.K]      prediction_dirs conf_thr unc_thr   (overrides for stage K)
//
// '#' and ';' start comments. Relative paths resolve against the directory of
// the config file. Unknown sections and keys are rejected.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mixteach/ensemble_uncertainty.hpp"
#include "mixteach/errors.hpp"
#include "mixteach/evaluation.hpp"
#include "mixteach/label_curation.hpp"
#include "mixteach/mix_synthesis.hpp"

namespace mixteach::pipeline {

namespace fs = std::filesystem;

class ParseError : public Error {
 public:
  ParseError(fs::path file, std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct DatasetPaths {
  fs::path labeled_dir;
  fs::path image_dir;
  fs::path calib_dir;
  fs::path unlabeled_dir;   // optional
  fs::path exclusion_list;  // optional: one frame id per line
  fs::path gt_dir;          // optional: ground truth for unlabeled frames
};

struct StageOverride {
  std::vector<fs::path> prediction_dirs;
  std::optional<double> conf_thr;
  std::optional<double> unc_thr;
};

struct PipelineConfig {
  fs::path source;  // file the config was read from, if any
  DatasetPaths dataset;
  std::vector<fs::path> prediction_dirs;
  ensemble::UncertaintyConfig uncertainty;
  curation::CurationConfig curation;
  mix::MixConfig mix;
  std::size_t sample_count = 100;
  double eval_iou_thr = 0.7;
  eval::IouMetric eval_metric = eval::IouMetric::k3d;
  std::vector<std::string> eval_categories{"Car", "Pedestrian", "Cyclist"};
  eval::LossConfig loss;
  fs::path output_root;
  int stage_count = 3;
  unsigned workers = 1;
  std::map<int, StageOverride> stages;

  std::uint64_t master_seed() const noexcept { return mix.master_seed; }
};

// Parses INI text. `base_dir` resolves relative paths. Throws ParseError on
// syntax problems and ValidationError on unknown keys / bad values.
PipelineConfig ParseConfig(const std::string& text, const fs::path& base_dir,
                           const fs::path& source = {});

// Reads, parses and validates, including existence of the dataset paths.
PipelineConfig LoadConfig(const fs::path& path);

// Range checks and input path existence. Prediction directories are checked
// when a stage runs (they are produced between stages).
void ValidateConfig(const PipelineConfig& cfg, bool check_paths = true);

// Settings in force for stage `stage_index` (1-based) after overrides.
PipelineConfig EffectiveConfig(const PipelineConfig& cfg, int stage_index);

// Canonical, fully defaulted text form: fixed section and key order, absolute
// paths, shortest exact numbers. Parsing it gives back an equal config.
std::string CanonicalConfigText(const PipelineConfig& cfg);

}  // namespace mixteach::pipeline
