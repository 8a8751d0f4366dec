#pragma once

// Localization uncertainty of pseudo labels from an ensemble of N detectors.
//
// Predictions of all models on one frame are grouped greedily: the highest
// scoring unassigned box seeds a cluster and takes every unassigned box whose
// 3D IoU with the seed exceeds a threshold. Each cluster's uncertainty is
//
//   u = 1 - sum_{i,j in members} a_ij IoU3D(b_i, b_j) / sum_{i,j < N} a_ij,
//   a_ij = beta if i == j, 1 otherwise,
//
// which is 0 when all N models agree perfectly and 1 when no model fires.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mixteach/geometry3d.hpp"

namespace mixteach::ensemble {

struct ModelBox {
  std::size_t model_index = 0;
  Box3D box;  // score required
};

struct EnsemblePredictions {
  std::string frame_id;
  std::size_t n_models = 0;
  std::vector<ModelBox> boxes;
};

struct UncertaintyConfig {
  double cluster_iou_thr = 0.5;
  double beta = 1.0;
  // Keep only the highest-scoring member per model when computing u.
  bool dedupe_same_model = false;
  // Only boxes of the seed's category may join its cluster.
  bool same_category_only = true;
};

struct Cluster {
  // Seed first, then the remaining members in selection order.
  std::vector<ModelBox> members;

  const ModelBox& seed() const { return members.front(); }
  const Box3D& representative() const { return members.front().box; }
};

struct ScoredBox {
  Box3D box;
  double uncertainty = 1.0;
};

// Throws ValidationError on out-of-range fields.
void Validate(const UncertaintyConfig& cfg);
// Throws Error(kInvalidArgument) when a model index is >= n_models or a box
// lacks a score / is not a valid box.
void Validate(const EnsemblePredictions& preds);

// Clusters ordered by descending seed score. Seed ties break by smaller model
// index, then input order.
std::vector<Cluster> ClusterPredictions(const EnsemblePredictions& preds,
                                        const UncertaintyConfig& cfg);

// u for a set of member boxes out of `n_models` slots, clamped to [0, 1].
// An empty member set (object missed by every model) gives 1.
double ClusterUncertainty(std::span<const ModelBox> members, std::size_t n_models,
                          const UncertaintyConfig& cfg);
double ClusterUncertainty(const Cluster& cluster, std::size_t n_models,
                          const UncertaintyConfig& cfg);

// One (representative, u) per cluster, in cluster order. The representative
// keeps the seed's own score.
std::vector<ScoredBox> ScoreFrame(const EnsemblePredictions& preds, const UncertaintyConfig& cfg);

struct CalibrationRow {
  double score = 0.0;
  double uncertainty = 0.0;
  double iou3d_gt = 0.0;
};

// Best 3D IoU of each scored box against same-category ground truth (0 when
// there is none). DontCare and invalid GT boxes are ignored.
std::vector<CalibrationRow> ExportCalibrationStats(std::span<const ScoredBox> scored,
                                                   std::span<const Box3D> ground_truth);

// "score,uncertainty,iou3d_gt" header plus one line per row.
std::string FormatCalibrationCsv(std::span<const CalibrationRow> rows);

// Reads <dir_k>/<frame_id>.txt for each model directory. Every line must carry
// a score; a missing file throws Error(kMissingPredictions).
EnsemblePredictions LoadEnsemblePredictions(std::span<const std::filesystem::path> model_dirs,
                                            const std::string& frame_id);

}  // namespace mixteach::ensemble
