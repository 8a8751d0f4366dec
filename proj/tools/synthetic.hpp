#pragma once

// Synthetic KITTI-style scenes with a scripted ensemble of noisy detectors.
//
// Every ground-truth object carries a latent difficulty d in [0, 1]. Each model
// detects it with probability that falls with d and places its box with
// localization noise that grows with d, independently of the other models, so
// boxes the models disagree on are also the badly localized ones. Scores are
// only loosely tied to d. Every model also emits a few unsupported false
// positives on non-empty frames. Empty unlabeled frames get no predictions.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mixteach/geometry3d.hpp"
#include "mixteach/image.hpp"

namespace mixteach::synth {

struct SceneConfig {
  std::size_t n_labeled = 20;
  std::size_t n_unlabeled = 80;
  std::size_t n_models = 5;
  int image_width = 416;
  int image_height = 128;
  double empty_fraction = 0.25;       // unlabeled frames with no objects
  int max_objects = 4;
  double false_positives_per_frame = 0.6;  // per model, non-empty frames only
  std::uint64_t seed = 7;
};

struct SynthObject {
  Box3D box;
  double difficulty = 0.0;
};

struct SynthFrame {
  std::string frame_id;
  bool labeled = false;
  std::vector<SynthObject> objects;
  std::vector<std::vector<Box3D>> predictions;  // [model][box]; unlabeled frames only
};

struct Scene {
  SceneConfig config;
  CameraProjection calib;
  std::vector<SynthFrame> frames;
};

// P2 of KITTI's camera 2 rescaled to the given image width.
CameraProjection ScaledKittiP2(int image_width);

Scene GenerateScene(const SceneConfig& cfg);

std::vector<Box3D> GroundTruth(const SynthFrame& frame);

Image RenderFrame(const Scene& scene, const SynthFrame& frame);

// Writes images/, calib/, labeled/ (labels of labeled frames), gt/ (labels of
// unlabeled frames), predictions/model_<k>/ and pipeline.ini under `root`.
void WriteScene(const Scene& scene, const std::filesystem::path& root);

}  // namespace mixteach::synth
