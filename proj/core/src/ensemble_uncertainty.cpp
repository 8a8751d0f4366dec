#include "mixteach/ensemble_uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mixteach/errors.hpp"
#include "mixteach/kitti_io.hpp"
#include "mixteach/text_format.hpp"

namespace mixteach::ensemble {

void Validate(const UncertaintyConfig& cfg) {
  if (!(cfg.cluster_iou_thr > 0.0 && cfg.cluster_iou_thr < 1.0)) {
    throw ValidationError("uncertainty.cluster_iou_thr", "must lie in (0, 1)");
  }
  if (!(cfg.beta > 0.0) || !std::isfinite(cfg.beta)) {
    throw ValidationError("uncertainty.beta", "must be a positive finite number");
  }
}

void Validate(const EnsemblePredictions& preds) {
  for (const ModelBox& mb : preds.boxes) {
    if (mb.model_index >= preds.n_models) {
      throw Error(ErrorCode::kInvalidArgument,
                  "frame " + preds.frame_id + ": model index " + std::to_string(mb.model_index) +
                      " >= N=" + std::to_string(preds.n_models));
    }
    if (!mb.box.score) {
      throw Error(ErrorCode::kInvalidArgument, "frame " + preds.frame_id + ": prediction without score");
    }
    if (!IsValidBox(mb.box)) {
      throw Error(ErrorCode::kInvalidArgument, "frame " + preds.frame_id + ": invalid prediction box");
    }
  }
}

std::vector<Cluster> ClusterPredictions(const EnsemblePredictions& preds,
                                        const UncertaintyConfig& cfg) {
  Validate(preds);
  const auto& boxes = preds.boxes;
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = *boxes[a].box.score;
    const double sb = *boxes[b].box.score;
    if (sa != sb) return sa > sb;
    return boxes[a].model_index < boxes[b].model_index;
  });

  std::vector<bool> taken(boxes.size(), false);
  std::vector<Cluster> clusters;
  for (std::size_t seed_pos = 0; seed_pos < order.size(); ++seed_pos) {
    const std::size_t seed = order[seed_pos];
    if (taken[seed]) continue;
    taken[seed] = true;
    Cluster cluster;
    cluster.members.push_back(boxes[seed]);
    const Box3D& seed_box = boxes[seed].box;
    for (std::size_t k = seed_pos + 1; k < order.size(); ++k) {
      const std::size_t j = order[k];
      if (taken[j]) continue;
      if (cfg.same_category_only && !(boxes[j].box.category == seed_box.category)) continue;
      if (geometry::Iou3d(boxes[j].box, seed_box) > cfg.cluster_iou_thr) {
        taken[j] = true;
        cluster.members.push_back(boxes[j]);
      }
    }
    clusters.push_back(std::move(cluster));
  }
  return clusters;
}

double ClusterUncertainty(std::span<const ModelBox> members, std::size_t n_models,
                          const UncertaintyConfig& cfg) {
  if (n_models == 0) throw Error(ErrorCode::kInvalidArgument, "n_models must be >= 1");
  std::vector<const Box3D*> used;
  if (cfg.dedupe_same_model) {
    // Members arrive seed-first in descending score, so the first box seen per
    // model is that model's best.
    std::vector<bool> seen(n_models, false);
    for (const ModelBox& m : members) {
      if (m.model_index < n_models && !seen[m.model_index]) {
        seen[m.model_index] = true;
        used.push_back(&m.box);
      }
    }
  } else {
    for (const ModelBox& m : members) used.push_back(&m.box);
  }

  double numerator = 0.0;
  for (std::size_t i = 0; i < used.size(); ++i) {
    numerator += cfg.beta * geometry::Iou3d(*used[i], *used[i]);
    for (std::size_t j = i + 1; j < used.size(); ++j) {
      numerator += 2.0 * geometry::Iou3d(*used[i], *used[j]);
    }
  }
  const auto n = static_cast<double>(n_models);
  const double denominator = cfg.beta * n + n * (n - 1.0);
  return std::clamp(1.0 - numerator / denominator, 0.0, 1.0);
}

double ClusterUncertainty(const Cluster& cluster, std::size_t n_models,
                          const UncertaintyConfig& cfg) {
  return ClusterUncertainty(std::span<const ModelBox>(cluster.members), n_models, cfg);
}

std::vector<ScoredBox> ScoreFrame(const EnsemblePredictions& preds, const UncertaintyConfig& cfg) {
  std::vector<ScoredBox> out;
  for (const Cluster& c : ClusterPredictions(preds, cfg)) {
    out.push_back({c.representative(), ClusterUncertainty(c, preds.n_models, cfg)});
  }
  return out;
}

std::vector<CalibrationRow> ExportCalibrationStats(std::span<const ScoredBox> scored,
                                                   std::span<const Box3D> ground_truth) {
  std::vector<CalibrationRow> rows;
  rows.reserve(scored.size());
  for (const ScoredBox& s : scored) {
    double best = 0.0;
    for (const Box3D& gt : ground_truth) {
      if (gt.category.IsDontCare() || !(gt.category == s.box.category) || !IsValidBox(gt)) continue;
      best = std::max(best, geometry::Iou3d(s.box, gt));
    }
    rows.push_back({s.box.score.value_or(0.0), s.uncertainty, best});
  }
  return rows;
}

std::string FormatCalibrationCsv(std::span<const CalibrationRow> rows) {
  std::string out = "score,uncertainty,iou3d_gt\n";
  for (const CalibrationRow& r : rows) {
    out += text::FormatFixed(r.score, 6) + ',' + text::FormatFixed(r.uncertainty, 6) + ',' +
           text::FormatFixed(r.iou3d_gt, 6) + '\n';
  }
  return out;
}

EnsemblePredictions LoadEnsemblePredictions(std::span<const std::filesystem::path> model_dirs,
                                            const std::string& frame_id) {
  EnsemblePredictions preds;
  preds.frame_id = frame_id;
  preds.n_models = model_dirs.size();
  for (std::size_t m = 0; m < model_dirs.size(); ++m) {
    const auto path = model_dirs[m] / (frame_id + ".txt");
    if (!std::filesystem::exists(path)) {
      throw Error(ErrorCode::kMissingPredictions,
                  "model " + std::to_string(m) + " (" + model_dirs[m].string() +
                      "): no predictions for frame " + frame_id);
    }
    for (Box3D& b : kitti::ParseLabelFile(path)) {
      if (b.category.IsDontCare()) continue;
      if (!b.score) {
        throw Error(ErrorCode::kMalformedLine, path.string() + ": prediction line without score");
      }
      preds.boxes.push_back({m, std::move(b)});
    }
  }
  return preds;
}

}  // namespace mixteach::ensemble
