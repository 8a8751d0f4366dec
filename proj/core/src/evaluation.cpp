#include "mixteach/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mixteach/errors.hpp"
#include "mixteach/log.hpp"
#include "mixteach/text_format.hpp"

namespace mixteach::eval {
namespace {

double ImageTerm(const std::vector<PerBoxLoss>& boxes) {
  if (boxes.empty()) return 0.0;
  double sum = 0.0;
  for (const PerBoxLoss& b : boxes) sum += b.cls + b.reg;
  return sum / static_cast<double>(boxes.size());
}

double GroupTerm(std::span<const std::vector<PerBoxLoss>> images) {
  double total = 0.0;
  for (const auto& img : images) total += ImageTerm(img);
  return total;
}

struct RankedDetection {
  double score;
  std::size_t frame;
  std::size_t order;
  bool tp;
};

}  // namespace

double SupervisedLoss(std::span<const std::vector<PerBoxLoss>> per_image) { return GroupTerm(per_image); }

double UnsupervisedLoss(std::span<const std::vector<PerBoxLoss>> on_labeled_targets,
                        std::span<const std::vector<PerBoxLoss>> on_background_targets) {
  return GroupTerm(on_labeled_targets) + GroupTerm(on_background_targets);
}

double TotalLoss(double supervised, double unsupervised, const LossConfig& cfg) {
  return supervised + cfg.lambda * unsupervised;
}

std::string_view DifficultyName(Difficulty d) {
  switch (d) {
    case Difficulty::kAll: return "all";
    case Difficulty::kEasy: return "easy";
    case Difficulty::kModerate: return "moderate";
    case Difficulty::kHard: return "hard";
  }
  return "all";
}

std::string_view IouMetricName(IouMetric m) { return m == IouMetric::k3d ? "3d" : "bev"; }

void Validate(const EvalConfig& cfg) {
  if (!(cfg.iou_thr > 0.0 && cfg.iou_thr <= 1.0)) throw ValidationError("eval.iou_thr", "must lie in (0, 1]");
  if (cfg.recall_points < 1) throw ValidationError("eval.recall_points", "must be >= 1");
}

bool PassesDifficulty(const Box3D& gt, Difficulty d) {
  double min_height = 0.0;
  int max_occlusion = 0;
  double max_truncation = 0.0;
  switch (d) {
    case Difficulty::kAll: return true;
    case Difficulty::kEasy: min_height = 40.0; max_occlusion = 0; max_truncation = 0.15; break;
    case Difficulty::kModerate: min_height = 25.0; max_occlusion = 1; max_truncation = 0.30; break;
    case Difficulty::kHard: min_height = 25.0; max_occlusion = 2; max_truncation = 0.50; break;
  }
  return gt.bbox2d.height() >= min_height && gt.occluded <= max_occlusion &&
         gt.truncated <= max_truncation;
}

double PairIou(const Box3D& a, const Box3D& b, IouMetric metric) {
  return metric == IouMetric::k3d ? geometry::Iou3d(a, b) : geometry::IouBev(a, b);
}

std::vector<Match> MatchPredictions(std::span<const Box3D> preds, std::span<const Box3D> gts,
                                    const EvalConfig& cfg) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].score.value_or(0.0) > preds[b].score.value_or(0.0);
  });
  std::vector<bool> used(gts.size(), false);
  std::vector<Match> out;
  out.reserve(preds.size());
  for (std::size_t p : order) {
    Match m;
    m.pred_index = p;
    double best = -1.0;
    std::size_t best_gt = 0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g]) continue;
      const double iou = PairIou(preds[p], gts[g], cfg.metric);
      if (iou > best) {
        best = iou;
        best_gt = g;
      }
    }
    if (best >= cfg.iou_thr) {
      used[best_gt] = true;
      m.gt_index = best_gt;
      m.iou = best;
    }
    out.push_back(m);
  }
  return out;
}

double AveragePrecisionFromRanking(const std::vector<bool>& ranked_is_tp, std::size_t n_gt,
                                   int recall_points) {
  if (n_gt == 0 || recall_points < 1) return 0.0;
  const std::size_t n = ranked_is_tp.size();
  std::vector<double> precision(n);
  std::vector<std::size_t> tp_at(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (ranked_is_tp[i]) ++tp;
    tp_at[i] = tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  // Running max from the tail gives max precision over ranks >= i, and recall
  // is non-decreasing in rank.
  std::vector<double> tail_max(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) tail_max[i] = std::max(tail_max[i + 1], precision[i]);

  const auto R = static_cast<std::size_t>(recall_points);
  double sum = 0.0;
  std::size_t rank = 0;
  for (std::size_t k = 1; k <= R; ++k) {
    // First rank whose recall tp/n_gt >= k/R, compared exactly in integers.
    while (rank < n && tp_at[rank] * R < k * n_gt) ++rank;
    if (rank == n) break;
    sum += tail_max[rank];
  }
  return 100.0 * sum / static_cast<double>(R);
}

ApResult Ap40(std::span<const FrameBoxes> frames, const EvalConfig& cfg) {
  Validate(cfg);
  ApResult result;
  std::vector<RankedDetection> detections;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    std::vector<Box3D> preds;
    for (const Box3D& p : frames[f].preds) {
      if (p.category.name() == cfg.category && IsValidBox(p)) preds.push_back(p);
    }
    std::vector<Box3D> counted;
    std::vector<Box3D> ignored;
    for (const Box3D& g : frames[f].gts) {
      if (g.category.name() != cfg.category || !IsValidBox(g)) continue;
      (PassesDifficulty(g, cfg.difficulty) ? counted : ignored).push_back(g);
    }
    result.n_gt += counted.size();

    const auto matches = MatchPredictions(preds, counted, cfg);
    std::vector<Box3D> unmatched;
    std::vector<std::size_t> unmatched_order;
    for (std::size_t r = 0; r < matches.size(); ++r) {
      const Match& m = matches[r];
      if (m.gt_index) {
        detections.push_back({preds[m.pred_index].score.value_or(0.0), f, m.pred_index, true});
      } else {
        unmatched.push_back(preds[m.pred_index]);
        unmatched_order.push_back(m.pred_index);
      }
    }
    const auto ignored_matches = MatchPredictions(unmatched, ignored, cfg);
    for (const Match& m : ignored_matches) {
      if (m.gt_index) continue;
      detections.push_back({unmatched[m.pred_index].score.value_or(0.0), f,
                            unmatched_order[m.pred_index], false});
    }
  }

  std::sort(detections.begin(), detections.end(), [](const RankedDetection& a, const RankedDetection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.frame != b.frame) return a.frame < b.frame;
    return a.order < b.order;
  });
  result.n_pred = detections.size();
  std::vector<bool> ranked;
  ranked.reserve(detections.size());
  for (const auto& d : detections) {
    ranked.push_back(d.tp);
    result.n_tp += d.tp ? 1 : 0;
  }
  if (result.n_gt == 0) {
    result.no_ground_truth = true;
    log::Warn("NoGroundTruth: category " + cfg.category + " (" + std::string(DifficultyName(cfg.difficulty)) +
              ") has no ground truth; AP defined as 0");
    return result;
  }
  result.ap = AveragePrecisionFromRanking(ranked, result.n_gt, cfg.recall_points);
  return result;
}

PrecisionRecall PseudoLabelPr(std::span<const FrameBoxes> frames, double iou_thr, IouMetric metric) {
  std::size_t n_pseudo = 0;
  std::size_t n_gt = 0;
  std::size_t tp = 0;
  EvalConfig cfg;
  cfg.iou_thr = iou_thr;
  cfg.metric = metric;
  for (const FrameBoxes& frame : frames) {
    std::vector<std::string> names;
    for (const auto* list : {&frame.preds, &frame.gts}) {
      for (const Box3D& b : *list) {
        if (!b.category.IsDontCare()) names.push_back(b.category.name());
      }
    }
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    for (const std::string& name : names) {
      std::vector<Box3D> preds;
      std::vector<Box3D> gts;
      for (const Box3D& p : frame.preds) {
        if (p.category.name() == name && IsValidBox(p)) preds.push_back(p);
      }
      for (const Box3D& g : frame.gts) {
        if (g.category.name() == name && IsValidBox(g)) gts.push_back(g);
      }
      n_pseudo += preds.size();
      n_gt += gts.size();
      for (const Match& m : MatchPredictions(preds, gts, cfg)) tp += m.gt_index ? 1 : 0;
    }
  }
  PrecisionRecall pr;
  pr.tp = tp;
  if (n_pseudo == 0) {
    pr.precision = 1.0;
    pr.precision_vacuous = true;
  } else {
    pr.precision = static_cast<double>(tp) / static_cast<double>(n_pseudo);
  }
  if (n_gt == 0) {
    pr.recall = 1.0;
    pr.recall_vacuous = true;
  } else {
    pr.recall = static_cast<double>(tp) / static_cast<double>(n_gt);
  }
  return pr;
}

std::vector<ReportRow> Evaluate(std::span<const FrameBoxes> frames,
                                std::span<const std::string> categories, double iou_thr,
                                IouMetric metric) {
  std::vector<ReportRow> rows;
  for (const std::string& category : categories) {
    std::vector<FrameBoxes> only;
    only.reserve(frames.size());
    for (const FrameBoxes& f : frames) {
      FrameBoxes o;
      for (const Box3D& p : f.preds) {
        if (p.category.name() == category) o.preds.push_back(p);
      }
      for (const Box3D& g : f.gts) {
        if (g.category.name() == category) o.gts.push_back(g);
      }
      only.push_back(std::move(o));
    }
    const PrecisionRecall pr = PseudoLabelPr(only, iou_thr, metric);
    for (Difficulty d : {Difficulty::kEasy, Difficulty::kModerate, Difficulty::kHard, Difficulty::kAll}) {
      EvalConfig cfg;
      cfg.iou_thr = iou_thr;
      cfg.category = category;
      cfg.metric = metric;
      cfg.difficulty = d;
      rows.push_back({category, d, Ap40(frames, cfg), pr});
    }
  }
  return rows;
}

std::string FormatReport(std::span<const ReportRow> rows, double iou_thr, IouMetric metric) {
  std::string out = "# mixteach eval-report v1\n";
  out += "# iou_thr=" + text::FormatExact(iou_thr) + " metric=" + std::string(IouMetricName(metric)) +
         " recall_points=40\n";
  out += "# columns: category difficulty ap40 n_gt n_pred n_tp precision recall\n";
  for (const ReportRow& r : rows) {
    out += r.category + ' ' + std::string(DifficultyName(r.difficulty)) + ' ' +
           text::FormatFixed(r.ap.ap, 4) + ' ' + std::to_string(r.ap.n_gt) + ' ' +
           std::to_string(r.ap.n_pred) + ' ' + std::to_string(r.ap.n_tp) + ' ' +
           text::FormatFixed(r.pr.precision, 4) + ' ' + text::FormatFixed(r.pr.recall, 4) + '\n';
  }
  return out;
}

}  // namespace mixteach::eval
