#pragma once

// Reference metrics (AP at 40 recall points, pseudo-label precision/recall)
// and the loss aggregation used by the mixed-data student:
//
//   L   = L_s + lambda * L_u
//   L_s = sum over labeled images of mean_i (cls_i + reg_i) over human labels
//   L_u = same over pseudo labels, on labeled targets plus on backgrounds

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixteach/geometry3d.hpp"

namespace mixteach::eval {

struct LossConfig {
  double lambda = 1.0;
};

struct PerBoxLoss {
  double cls = 0.0;
  double reg = 0.0;
};

// Images with no boxes contribute 0.
double SupervisedLoss(std::span<const std::vector<PerBoxLoss>> per_image);
double UnsupervisedLoss(std::span<const std::vector<PerBoxLoss>> on_labeled_targets,
                        std::span<const std::vector<PerBoxLoss>> on_background_targets);
double TotalLoss(double supervised, double unsupervised, const LossConfig& cfg);

enum class IouMetric { k3d, kBev };

// KITTI difficulty strata as ground-truth predicates.
enum class Difficulty { kAll, kEasy, kModerate, kHard };

std::string_view DifficultyName(Difficulty d);
std::string_view IouMetricName(IouMetric m);

struct EvalConfig {
  double iou_thr = 0.7;
  int recall_points = 40;
  std::string category = "Car";
  IouMetric metric = IouMetric::k3d;
  Difficulty difficulty = Difficulty::kAll;
};

void Validate(const EvalConfig& cfg);

// Min 2D height / max occlusion / max truncation per the KITTI devkit:
// easy 40px/0/0.15, moderate 25px/1/0.30, hard 25px/2/0.50.
bool PassesDifficulty(const Box3D& gt, Difficulty d);

double PairIou(const Box3D& a, const Box3D& b, IouMetric metric);

struct Match {
  std::size_t pred_index = 0;            // into the input list
  std::optional<std::size_t> gt_index;   // matched ground truth, if any
  double iou = 0.0;
};

// Predictions visited by descending score (stable); each takes the unmatched
// ground truth with the highest IoU if that IoU >= iou_thr. Output follows
// the visiting order. Inputs are used as given (no category filtering).
std::vector<Match> MatchPredictions(std::span<const Box3D> preds, std::span<const Box3D> gts,
                                    const EvalConfig& cfg);

struct FrameBoxes {
  std::vector<Box3D> preds;
  std::vector<Box3D> gts;
};

struct ApResult {
  double ap = 0.0;  // percent
  std::size_t n_gt = 0;
  std::size_t n_pred = 0;
  std::size_t n_tp = 0;
  bool no_ground_truth = false;
};

// Selects cfg.category, applies the difficulty predicate (failing GT become
// "ignored": predictions matched to them count as neither TP nor FP), ranks
// all predictions globally and averages interpolated precision at recall
// k / recall_points, k = 1..recall_points. No ground truth gives 0.
ApResult Ap40(std::span<const FrameBoxes> frames, const EvalConfig& cfg);

// Interpolated-precision average from a ranked TP/FP sequence.
double AveragePrecisionFromRanking(const std::vector<bool>& ranked_is_tp, std::size_t n_gt,
                                   int recall_points);

struct PrecisionRecall {
  double precision = 1.0;
  double recall = 1.0;
  std::size_t tp = 0;
  bool precision_vacuous = false;  // empty pseudo set
  bool recall_vacuous = false;     // empty ground truth
};

// Aggregated over frames with the same greedy matching (all categories,
// DontCare ground truth excluded; matches must share a category).
PrecisionRecall PseudoLabelPr(std::span<const FrameBoxes> frames, double iou_thr,
                              IouMetric metric = IouMetric::k3d);

struct ReportRow {
  std::string category;
  Difficulty difficulty = Difficulty::kAll;
  ApResult ap;
  PrecisionRecall pr;
};

// Structured text: a "# mixteach eval-report v1" header, config echo lines,
// then one row per (category, stratum).
std::string FormatReport(std::span<const ReportRow> rows, double iou_thr, IouMetric metric);

// Evaluates every listed category on every stratum.
std::vector<ReportRow> Evaluate(std::span<const FrameBoxes> frames,
                                std::span<const std::string> categories, double iou_thr,
                                IouMetric metric);

}  // namespace mixteach::eval
