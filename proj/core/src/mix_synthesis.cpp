#include "mixteach/mix_synthesis.hpp"

#include <algorithm>
#include <cmath>

#include "mixteach/errors.hpp"
#include "mixteach/parallel.hpp"

namespace mixteach::mix {
namespace {

constexpr double kMaxCutRatio = 0.3;

void CheckProbability(double p, const char* field) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string("mix.") + field, "must lie in [0, 1]");
}

void CheckCutRatio(double ratio) {
  if (!(ratio >= 0.0 && ratio <= kMaxCutRatio)) {
    throw Error(ErrorCode::kInvalidArgument, "cut ratio must lie in [0, 0.3]");
  }
}

std::string SampleId(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu", index);
  return buf;
}

}  // namespace

void Validate(const MixConfig& cfg) {
  CheckProbability(cfg.p_background, "p_background");
  CheckProbability(cfg.p_border_cut, "p_border_cut");
  CheckProbability(cfg.p_color_pad, "p_color_pad");
  CheckProbability(cfg.collision_iou_thr, "collision_iou_thr");
  CheckProbability(cfg.min_visible_fraction, "min_visible_fraction");
  if (!(cfg.border_cut_ratio_min >= 0.0 && cfg.border_cut_ratio_min <= cfg.border_cut_ratio_max &&
        cfg.border_cut_ratio_max <= kMaxCutRatio)) {
    throw ValidationError("mix.border_cut_ratio", "need 0 <= min <= max <= 0.3");
  }
  if (!(cfg.mixup_weight_min >= 0.6 && cfg.mixup_weight_min <= cfg.mixup_weight_max &&
        cfg.mixup_weight_max <= 1.0)) {
    throw ValidationError("mix.mixup_weight", "need 0.6 <= min <= max <= 1.0");
  }
  if (cfg.max_paste_attempts < 1) throw ValidationError("mix.max_paste_attempts", "must be >= 1");
  if (cfg.paste_count_min < 0 || cfg.paste_count_min > cfg.paste_count_max) {
    throw ValidationError("mix.paste_count", "need 0 <= min <= max");
  }
  if (!(cfg.calib_tolerance >= 0.0)) throw ValidationError("mix.calib_tolerance", "must be >= 0");
}

std::string_view TargetKindName(TargetKind kind) {
  return kind == TargetKind::kLabeled ? "labeled" : "background";
}

std::string_view LabelOriginName(LabelOrigin origin) {
  return origin == LabelOrigin::kHuman ? "Human" : "Pseudo";
}

TargetRef SampleTarget(Rng& rng, std::span<const kitti::Frame> labeled,
                       const curation::BackgroundDatabase& backgrounds, const MixConfig& cfg) {
  if (labeled.empty() && backgrounds.records.empty()) {
    throw Error(ErrorCode::kEmptyPools, "no labeled frames and no background frames to paste onto");
  }
  bool use_background = rng.Bernoulli(cfg.p_background);
  if (use_background && backgrounds.records.empty()) use_background = false;
  if (!use_background && labeled.empty()) use_background = true;
  const std::size_t pool = use_background ? backgrounds.records.size() : labeled.size();
  const auto index = static_cast<std::size_t>(rng.UniformInt(0, static_cast<std::int64_t>(pool) - 1));
  return {use_background ? TargetKind::kBackground : TargetKind::kLabeled, index};
}

Target LoadTarget(const TargetRef& ref, std::span<const kitti::Frame> labeled,
                  const curation::BackgroundDatabase& backgrounds) {
  Target t;
  t.kind = ref.kind;
  if (ref.kind == TargetKind::kBackground) {
    const auto& rec = backgrounds.records.at(ref.index);
    t.frame_id = rec.frame_id;
    t.image = ReadPng(rec.image_path);
    t.calib = rec.calib;
  } else {
    const kitti::Frame& f = labeled[ref.index];
    t.frame_id = f.frame_id;
    t.image = ReadPng(f.image_path);
    t.calib = f.calib;
    if (f.labels) t.labels = *f.labels;
  }
  return t;
}

bool CollisionTest(const Rect& candidate, std::span<const Rect> existing, const MixConfig& cfg) {
  for (const Rect& e : existing) {
    if (geometry::Iou2d(candidate, e) > cfg.collision_iou_thr) return false;
  }
  return true;
}

int CutPixels(int length, double ratio) {
  return static_cast<int>(std::floor(ratio * static_cast<double>(length)));
}

Image BorderCut(const Image& patch, double ratio, Side side) {
  CheckCutRatio(ratio);
  const bool horizontal = side == Side::kLeft || side == Side::kRight;
  const int length = horizontal ? patch.width() : patch.height();
  const int cut = CutPixels(length, ratio);
  if (length - cut < 1 || patch.empty()) {
    throw Error(ErrorCode::kPatchTooSmall, "border cut leaves an empty patch");
  }
  switch (side) {
    case Side::kLeft: return patch.Crop(cut, 0, patch.width() - cut, patch.height());
    case Side::kRight: return patch.Crop(0, 0, patch.width() - cut, patch.height());
    case Side::kTop: return patch.Crop(0, cut, patch.width(), patch.height() - cut);
    case Side::kBottom: return patch.Crop(0, 0, patch.width(), patch.height() - cut);
  }
  return patch;
}

Image ColorPad(const Image& patch, double ratio, Side side, Rgb color) {
  CheckCutRatio(ratio);
  const bool horizontal = side == Side::kLeft || side == Side::kRight;
  const int length = horizontal ? patch.width() : patch.height();
  const int cut = CutPixels(length, ratio);
  if (length - cut < 1 || patch.empty()) {
    throw Error(ErrorCode::kPatchTooSmall, "colour padding covers the whole patch");
  }
  Image out = patch;
  int x0 = 0, y0 = 0, x1 = patch.width(), y1 = patch.height();
  switch (side) {
    case Side::kLeft: x1 = cut; break;
    case Side::kRight: x0 = patch.width() - cut; break;
    case Side::kTop: y1 = cut; break;
    case Side::kBottom: y0 = patch.height() - cut; break;
  }
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) out.set(x, y, color);
  }
  return out;
}

Image MixupBlend(const Image& fg, const Image& bg_region, double w) {
  if (fg.width() != bg_region.width() || fg.height() != bg_region.height()) {
    throw Error(ErrorCode::kShapeMismatch, "mixup inputs differ in size");
  }
  if (!(w >= 0.0 && w <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "mixup weight outside [0, 1]");
  Image out = fg;
  if (w == 1.0) return out;
  const auto& f = fg.data();
  const auto& b = bg_region.data();
  auto& o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double v = w * static_cast<double>(f[i]) + (1.0 - w) * static_cast<double>(b[i]);
    o[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
  return out;
}

MixedSample ComposeMixedImage(const Target& target, const curation::InstanceDatabase& instances,
                              int k_paste, const MixConfig& cfg, std::uint64_t sample_seed) {
  if (instances.records.empty()) {
    throw Error(ErrorCode::kEmptyInstanceDatabase, "instance database has no records");
  }
  Rng rng(DeriveSeed(sample_seed, 1));

  MixedSample sample;
  sample.image = target.image;
  sample.target_kind = target.kind;
  sample.target_frame_id = target.frame_id;
  sample.calib = target.calib;
  sample.sample_seed = sample_seed;

  std::vector<Rect> occupied;
  for (const Box3D& h : target.labels) {
    sample.labels.push_back({h, LabelOrigin::kHuman});
    if (!h.category.IsDontCare() && h.bbox2d.IsValid()) occupied.push_back(h.bbox2d);
  }

  const int W = target.image.width();
  const int H = target.image.height();
  int successes = 0;
  int consecutive_failures = 0;
  while (successes < k_paste && consecutive_failures < cfg.max_paste_attempts) {
    // Fixed draw sequence per attempt, used or not.
    const auto pick = static_cast<std::size_t>(
        rng.UniformInt(0, static_cast<std::int64_t>(instances.records.size()) - 1));
    const bool do_cut = rng.Bernoulli(cfg.p_border_cut);
    const double cut_ratio = rng.UniformReal(cfg.border_cut_ratio_min, cfg.border_cut_ratio_max);
    const auto cut_side = static_cast<Side>(rng.UniformInt(0, 3));
    const bool do_pad = rng.Bernoulli(cfg.p_color_pad);
    const double pad_ratio = rng.UniformReal(cfg.border_cut_ratio_min, cfg.border_cut_ratio_max);
    const auto pad_side = static_cast<Side>(rng.UniformInt(0, 3));
    const Rgb pad_color{static_cast<std::uint8_t>(rng.UniformInt(0, 255)),
                        static_cast<std::uint8_t>(rng.UniformInt(0, 255)),
                        static_cast<std::uint8_t>(rng.UniformInt(0, 255))};
    const double weight = rng.UniformReal(cfg.mixup_weight_min, cfg.mixup_weight_max);

    const curation::InstanceRecord& rec = instances.records[pick];
    if (!rec.source_calib.ApproxEqual(target.calib, cfg.calib_tolerance)) {
      throw Error(ErrorCode::kCalibrationMismatch,
                  "record " + rec.record_id + " was cropped under a different P2 than target " +
                      target.frame_id);
    }

    const curation::PixelRect& crop = rec.crop_rect;
    const int vx0 = std::max(crop.x0, 0), vy0 = std::max(crop.y0, 0);
    const int vx1 = std::min(crop.x1, W), vy1 = std::min(crop.y1, H);
    const double crop_area = static_cast<double>(crop.width()) * crop.height();
    const double visible = vx1 > vx0 && vy1 > vy0 ? static_cast<double>(vx1 - vx0) * (vy1 - vy0) : 0.0;
    const Rect candidate = rec.pseudo_label.bbox2d.IsValid() ? rec.pseudo_label.bbox2d : crop.ToRect();
    if (crop_area <= 0.0 || visible < cfg.min_visible_fraction * crop_area ||
        !CollisionTest(candidate, occupied, cfg)) {
      ++consecutive_failures;
      continue;
    }

    Image patch = rec.patch;
    int ox = crop.x0;
    int oy = crop.y0;
    if (do_cut) {
      const int cut = CutPixels((cut_side == Side::kLeft || cut_side == Side::kRight) ? patch.width()
                                                                                      : patch.height(),
                                cut_ratio);
      patch = BorderCut(patch, cut_ratio, cut_side);
      if (cut_side == Side::kLeft) ox += cut;
      if (cut_side == Side::kTop) oy += cut;
    }
    if (do_pad) patch = ColorPad(patch, pad_ratio, pad_side, pad_color);

    const int px0 = std::max(ox, 0), py0 = std::max(oy, 0);
    const int px1 = std::min(ox + patch.width(), W), py1 = std::min(oy + patch.height(), H);
    if (px1 > px0 && py1 > py0) {
      const Image fg = patch.Crop(px0 - ox, py0 - oy, px1 - px0, py1 - py0);
      const Image bg = sample.image.Crop(px0, py0, px1 - px0, py1 - py0);
      sample.image.Paste(MixupBlend(fg, bg, weight), px0, py0);
    }

    sample.labels.push_back({rec.pseudo_label, LabelOrigin::kPseudo});
    sample.pasted_record_ids.push_back(rec.record_id);
    occupied.push_back(candidate);
    ++successes;
    consecutive_failures = 0;
  }
  return sample;
}

std::uint64_t SampleSeed(std::uint64_t master_seed, std::size_t index) {
  return DeriveSeed(master_seed, static_cast<std::uint64_t>(index));
}

MixedSample GenerateSample(std::span<const kitti::Frame> labeled,
                           const curation::InstanceDatabase& instances,
                           const curation::BackgroundDatabase& backgrounds, const MixConfig& cfg,
                           std::uint64_t sample_seed) {
  Rng rng(DeriveSeed(sample_seed, 0));
  const TargetRef ref = SampleTarget(rng, labeled, backgrounds, cfg);
  const int k = static_cast<int>(rng.UniformInt(cfg.paste_count_min, cfg.paste_count_max));
  const Target target = LoadTarget(ref, labeled, backgrounds);
  return ComposeMixedImage(target, instances, k, cfg, sample_seed);
}

EpochResult GenerateEpoch(std::span<const kitti::Frame> labeled,
                          const curation::InstanceDatabase& instances,
                          const curation::BackgroundDatabase& backgrounds, const MixConfig& cfg,
                          std::size_t count, const fs::path& out_dir, unsigned workers) {
  Validate(cfg);
  std::error_code ec;
  for (const char* sub : {"images", "labels", "origins"}) fs::remove_all(out_dir / sub, ec);
  fs::remove(out_dir / "epoch_manifest.txt", ec);
  fs::create_directories(out_dir, ec);
  if (count > 0 && instances.records.empty()) {
    throw Error(ErrorCode::kEmptyInstanceDatabase, "instance database has no records");
  }

  EpochResult result;
  result.samples.resize(count);
  ParallelFor(count, workers, [&](std::size_t i) {
    const std::uint64_t seed = SampleSeed(cfg.master_seed, i);
    MixedSample s = GenerateSample(labeled, instances, backgrounds, cfg, seed);
    SampleSummary& summary = result.samples[i];
    summary.sample_id = SampleId(i);
    summary.target_kind = s.target_kind;
    summary.target_frame_id = s.target_frame_id;
    summary.sample_seed = seed;
    summary.pasted_record_ids = s.pasted_record_ids;

    std::vector<Box3D> boxes;
    std::string origins;
    for (const MixedLabel& l : s.labels) {
      boxes.push_back(l.box);
      origins += std::string(LabelOriginName(l.origin)) + '\n';
      (l.origin == LabelOrigin::kHuman ? summary.n_human : summary.n_pseudo) += 1;
    }
    WritePng(s.image, out_dir / "images" / (summary.sample_id + ".png"));
    kitti::WriteLabelFile(boxes, out_dir / "labels" / (summary.sample_id + ".txt"));
    kitti::WriteTextFile(out_dir / "origins" / (summary.sample_id + ".txt"), origins);
  });

  std::string manifest = "# mixteach epoch-manifest v1\n";
  manifest += "# master_seed=" + std::to_string(cfg.master_seed) + " count=" + std::to_string(count) + "\n";
  manifest += "# columns: sample_id target_kind target_frame_id sample_seed n_human n_pseudo pasted_record_ids\n";
  for (const SampleSummary& s : result.samples) {
    std::string ids;
    for (const auto& id : s.pasted_record_ids) ids += (ids.empty() ? "" : ",") + id;
    manifest += s.sample_id + ' ' + std::string(TargetKindName(s.target_kind)) + ' ' + s.target_frame_id +
                ' ' + std::to_string(s.sample_seed) + ' ' + std::to_string(s.n_human) + ' ' +
                std::to_string(s.n_pseudo) + ' ' + (ids.empty() ? "-" : ids) + '\n';
  }
  result.manifest_path = out_dir / "epoch_manifest.txt";
  kitti::WriteTextFile(result.manifest_path, manifest);
  return result;
}

}  // namespace mixteach::mix
