#include "mixteach/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "mixteach/errors.hpp"
#include "mixteach/log.hpp"
#include "mixteach/mix_synthesis.hpp"
#include "mixteach/parallel.hpp"
#include "mixteach/text_format.hpp"

namespace mixteach::pipeline {
namespace {

constexpr std::string_view kManifestHeader = "# mixteach stage-manifest v1";

std::set<std::string> ReadExclusions(const fs::path& path) {
  std::set<std::string> out;
  if (path.empty()) return out;
  std::istringstream in(kitti::ReadTextFile(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto id = text::Trim(line);
    if (!id.empty() && id.front() != '#') out.emplace(id);
  }
  return out;
}

// True if `p` equals `root` or lies below it.
bool IsWithin(const fs::path& p, const fs::path& root) {
  const auto rel = fs::absolute(p).lexically_normal().lexically_relative(fs::absolute(root).lexically_normal());
  if (rel.empty()) return false;
  const auto first = *rel.begin();
  return first != "..";
}

std::string Rel(const fs::path& p) { return p.generic_string(); }

std::optional<std::string> ValueOf(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) return std::nullopt;
  return it->second;
}

std::size_t CountOf(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto v = ValueOf(kv, key);
  if (!v) return 0;
  const auto n = text::ParseUint64(*v);
  if (!n) throw Error(ErrorCode::kParseError, "stage manifest: bad count for " + key);
  return static_cast<std::size_t>(*n);
}

}  // namespace

kitti::DatasetManifest ScanFromConfig(const PipelineConfig& cfg) {
  kitti::ScanOptions opt;
  opt.labeled_dir = cfg.dataset.labeled_dir;
  opt.image_dir = cfg.dataset.image_dir;
  opt.calib_dir = cfg.dataset.calib_dir;
  opt.unlabeled_dir = cfg.dataset.unlabeled_dir;
  opt.unlabeled_exclusions = ReadExclusions(cfg.dataset.exclusion_list);
  return kitti::ScanDataset(opt).manifest;
}

void CheckPredictions(std::span<const fs::path> model_dirs, std::span<const kitti::Frame> frames) {
  std::string problems;
  for (std::size_t m = 0; m < model_dirs.size(); ++m) {
    const fs::path& dir = model_dirs[m];
    if (!fs::is_directory(dir)) {
      problems += "\n  model " + std::to_string(m) + " (" + dir.string() + "): directory missing";
      continue;
    }
    std::vector<std::string> missing;
    for (const auto& f : frames) {
      if (!fs::is_regular_file(dir / (f.frame_id + ".txt"))) missing.push_back(f.frame_id);
    }
    if (missing.empty()) continue;
    problems += "\n  model " + std::to_string(m) + " (" + dir.string() + "): " +
                std::to_string(missing.size()) + " frame(s) missing:";
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i) problems += " " + missing[i];
    if (missing.size() > 10) problems += " ...";
  }
  if (!problems.empty()) throw Error(ErrorCode::kMissingPredictions, "missing predictions" + problems);
}

std::vector<curation::ScoredFrame> ScoreFrames(const kitti::DatasetManifest& manifest,
                                               std::span<const fs::path> model_dirs,
                                               const ensemble::UncertaintyConfig& cfg,
                                               unsigned workers) {
  ensemble::Validate(cfg);
  if (model_dirs.empty()) throw ValidationError("ensemble.prediction_dirs", "need at least one model");
  CheckPredictions(model_dirs, manifest.unlabeled_frames);
  std::vector<curation::ScoredFrame> out(manifest.n_u());
  ParallelFor(out.size(), workers, [&](std::size_t i) {
    auto preds = ensemble::LoadEnsemblePredictions(model_dirs, manifest.unlabeled_frames[i].frame_id);
    auto scored = ensemble::ScoreFrame(preds, cfg);
    out[i] = curation::ScoredFrame{std::move(preds), std::move(scored)};
  });
  return out;
}

std::vector<Box3D> CuratedBoxes(const curation::ScoredFrame& frame, const curation::CurationConfig& cfg) {
  std::vector<Box3D> boxes;
  for (const auto& sb : curation::CuratePseudoLabels(frame.scored, cfg)) boxes.push_back(sb.box);
  return boxes;
}

void WritePseudoLabels(const kitti::DatasetManifest& manifest,
                       std::span<const curation::ScoredFrame> frames,
                       const curation::CurationConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string& id =
        i < manifest.n_u() ? manifest.unlabeled_frames[i].frame_id : frames[i].predictions.frame_id;
    kitti::WriteLabelFile(CuratedBoxes(frames[i], cfg), dir / (id + ".txt"));
  }
}

std::vector<std::vector<Box3D>> LoadGroundTruth(const kitti::DatasetManifest& manifest,
                                                const fs::path& gt_dir) {
  std::vector<std::vector<Box3D>> out;
  out.reserve(manifest.n_u());
  std::size_t missing = 0;
  for (const auto& f : manifest.unlabeled_frames) {
    const fs::path p = gt_dir / (f.frame_id + ".txt");
    if (fs::is_regular_file(p)) {
      out.push_back(kitti::ParseLabelFile(p));
    } else {
      ++missing;
      out.emplace_back();
    }
  }
  if (missing > 0) {
    log::Warn(std::to_string(missing) + " unlabeled frame(s) have no ground truth in " + gt_dir.string());
  }
  return out;
}

std::vector<ensemble::CalibrationRow> CalibrationStats(std::span<const curation::ScoredFrame> frames,
                                                       std::span<const std::vector<Box3D>> gt) {
  if (frames.size() != gt.size()) {
    throw Error(ErrorCode::kInvalidArgument, "calibration stats: frame and ground-truth counts differ");
  }
  std::vector<ensemble::CalibrationRow> rows;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto r = ensemble::ExportCalibrationStats(frames[i].scored, gt[i]);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return rows;
}

std::string Sha256Hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kInternal, "sha256 failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string StoredConfigText(const PipelineConfig& cfg) {
  PipelineConfig c = cfg;
  c.workers = 1;
  return CanonicalConfigText(c);
}

fs::path StageDir(const PipelineConfig& cfg, int stage_index) {
  return cfg.output_root / ("stage_" + std::to_string(stage_index));
}

std::string FormatStageManifest(const StageManifest& m) {
  std::ostringstream o;
  o << kManifestHeader << "\n";
  o << "stage_index " << m.stage_index << "\n";
  o << "master_seed " << m.master_seed << "\n";
  o << "config_hash sha256:" << m.config_hash << "\n";
  o << "config " << Rel(m.config_path) << "\n";
  for (const auto& d : m.prediction_dirs) o << "prediction_dir " << d.string() << "\n";
  o << "dataset_manifest " << Rel(m.dataset_manifest) << "\n";
  o << "pseudo_labels " << Rel(m.pseudo_labels) << "\n";
  o << "instance_db " << Rel(m.instance_db) << "\n";
  o << "background_db " << Rel(m.background_db) << "\n";
  o << "mixed_dir " << Rel(m.mixed_dir) << "\n";
  o << "report " << Rel(m.report) << "\n";
  if (m.calibration) o << "calibration " << Rel(*m.calibration) << "\n";
  const StageCounts& c = m.counts;
  o << "count.labeled_frames " << c.labeled_frames << "\n"
    << "count.unlabeled_frames " << c.unlabeled_frames << "\n"
    << "count.scored_boxes " << c.scored_boxes << "\n"
    << "count.pseudo_labels " << c.pseudo_labels << "\n"
    << "count.instances " << c.instances << "\n"
    << "count.backgrounds " << c.backgrounds << "\n"
    << "count.mixed_samples " << c.mixed_samples << "\n";
  // The student is trained externally on mixed_dir, initialized from the
  // previous teacher; its ensemble's predictions feed stage_index + 1.
  o << "next_stage_input prediction dirs of the student ensemble trained on " << Rel(m.mixed_dir) << "\n";
  return o.str();
}

StageManifest ParseStageManifest(std::string_view text_in) {
  std::istringstream in{std::string(text_in)};
  std::string line;
  if (!std::getline(in, line) || text::Trim(line) != kManifestHeader) {
    throw Error(ErrorCode::kParseError, "stage manifest: missing or unsupported schema header");
  }
  StageManifest m;
  std::map<std::string, std::string> kv;
  while (std::getline(in, line)) {
    const auto t = text::Trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto sp = t.find(' ');
    const std::string key(t.substr(0, sp));
    const std::string value = sp == std::string_view::npos ? "" : std::string(text::Trim(t.substr(sp + 1)));
    if (key == "prediction_dir") {
      m.prediction_dirs.emplace_back(value);
    } else {
      kv[key] = value;
    }
  }
  auto need = [&](const std::string& key) {
    auto v = ValueOf(kv, key);
    if (!v) throw Error(ErrorCode::kParseError, "stage manifest: missing '" + key + "'");
    return *v;
  };
  const auto idx = text::ParseInt(need("stage_index"));
  const auto seed = text::ParseUint64(need("master_seed"));
  if (!idx || !seed) throw Error(ErrorCode::kParseError, "stage manifest: bad stage_index or master_seed");
  m.stage_index = static_cast<int>(*idx);
  m.master_seed = *seed;
  std::string hash = need("config_hash");
  if (!hash.starts_with("sha256:")) throw Error(ErrorCode::kParseError, "stage manifest: config_hash must be sha256");
  m.config_hash = hash.substr(7);
  m.config_path = need("config");
  m.dataset_manifest = need("dataset_manifest");
  m.pseudo_labels = need("pseudo_labels");
  m.instance_db = need("instance_db");
  m.background_db = need("background_db");
  m.mixed_dir = need("mixed_dir");
  m.report = need("report");
  if (auto c = ValueOf(kv, "calibration")) m.calibration = fs::path(*c);
  m.counts.labeled_frames = CountOf(kv, "count.labeled_frames");
  m.counts.unlabeled_frames = CountOf(kv, "count.unlabeled_frames");
  m.counts.scored_boxes = CountOf(kv, "count.scored_boxes");
  m.counts.pseudo_labels = CountOf(kv, "count.pseudo_labels");
  m.counts.instances = CountOf(kv, "count.instances");
  m.counts.backgrounds = CountOf(kv, "count.backgrounds");
  m.counts.mixed_samples = CountOf(kv, "count.mixed_samples");
  return m;
}

StageManifest RunStage(const PipelineConfig& base, int stage_index) {
  if (stage_index < 1 || stage_index > base.stage_count) {
    throw ValidationError("stage", "index " + std::to_string(stage_index) + " outside 1.." +
                                       std::to_string(base.stage_count));
  }
  const PipelineConfig cfg = EffectiveConfig(base, stage_index);
  ValidateConfig(cfg, /*check_paths=*/true);

  const fs::path final_dir = StageDir(cfg, stage_index);
  const fs::path tmp_dir = cfg.output_root / (".stage_" + std::to_string(stage_index) + ".tmp");
  // A stage must never read what it is about to write.
  for (const fs::path& in : cfg.prediction_dirs) {
    if (IsWithin(in, final_dir) || IsWithin(in, tmp_dir)) {
      throw ValidationError("ensemble.prediction_dirs",
                            in.string() + " lies inside the stage output " + final_dir.string());
    }
  }
  for (const fs::path* in : {&cfg.dataset.labeled_dir, &cfg.dataset.image_dir, &cfg.dataset.calib_dir}) {
    if (IsWithin(*in, final_dir) || IsWithin(*in, tmp_dir)) {
      throw ValidationError("dataset", in->string() + " lies inside the stage output");
    }
  }

  const auto manifest = ScanFromConfig(cfg);
  log::Info("stage " + std::to_string(stage_index) + ": " + std::to_string(manifest.n_l()) + " labeled, " +
            std::to_string(manifest.n_u()) + " unlabeled frames");
  // Checked before anything is written.
  CheckPredictions(cfg.prediction_dirs, manifest.unlabeled_frames);

  std::error_code ec;
  fs::remove_all(tmp_dir, ec);
  fs::create_directories(tmp_dir);
  try {
    StageManifest m;
    m.stage_index = stage_index;
    m.master_seed = cfg.master_seed();
    m.prediction_dirs = cfg.prediction_dirs;
    m.counts.labeled_frames = manifest.n_l();
    m.counts.unlabeled_frames = manifest.n_u();

    m.config_path = "config.resolved.ini";
    const std::string stored = StoredConfigText(base);
    kitti::WriteTextFile(tmp_dir / m.config_path, stored);
    m.config_hash = Sha256Hex(stored);

    m.dataset_manifest = "dataset_manifest.txt";
    kitti::WriteManifest(manifest, tmp_dir / m.dataset_manifest);

    const auto scored = ScoreFrames(manifest, cfg.prediction_dirs, cfg.uncertainty, cfg.workers);
    for (const auto& f : scored) m.counts.scored_boxes += f.scored.size();

    m.pseudo_labels = "pseudo_labels";
    WritePseudoLabels(manifest, scored, cfg.curation, tmp_dir / m.pseudo_labels);
    for (const auto& f : scored) m.counts.pseudo_labels += CuratedBoxes(f, cfg.curation).size();

    m.instance_db = "instance_db";
    m.background_db = "background_db";
    const auto instances =
        curation::BuildInstanceDatabase(manifest, scored, cfg.curation, tmp_dir / m.instance_db, cfg.workers);
    const auto backgrounds =
        curation::BuildBackgroundDatabase(manifest, scored, cfg.curation, tmp_dir / m.background_db);
    m.counts.instances = instances.records.size();
    m.counts.backgrounds = backgrounds.records.size();
    // Background image paths are stored relative to the db directory; the
    // temporary and final stage directories are siblings, so they survive
    // the rename below.

    m.mixed_dir = "mixed";
    const auto epoch = mix::GenerateEpoch(manifest.labeled_frames, instances, backgrounds, cfg.mix,
                                          cfg.sample_count, tmp_dir / m.mixed_dir, cfg.workers);
    m.counts.mixed_samples = epoch.samples.size();

    m.report = "report.txt";
    if (!cfg.dataset.gt_dir.empty()) {
      const auto gt = LoadGroundTruth(manifest, cfg.dataset.gt_dir);
      std::vector<eval::FrameBoxes> frames;
      for (std::size_t i = 0; i < scored.size(); ++i) frames.push_back({CuratedBoxes(scored[i], cfg.curation), gt[i]});
      const auto rows = eval::Evaluate(frames, cfg.eval_categories, cfg.eval_iou_thr, cfg.eval_metric);
      kitti::WriteTextFile(tmp_dir / m.report, eval::FormatReport(rows, cfg.eval_iou_thr, cfg.eval_metric));
      m.calibration = fs::path("calibration.csv");
      kitti::WriteTextFile(tmp_dir / *m.calibration,
                           ensemble::FormatCalibrationCsv(CalibrationStats(scored, gt)));
    } else {
      kitti::WriteTextFile(tmp_dir / m.report,
                           "# mixteach eval-report v1\n# no ground truth configured (dataset.gt_dir)\n");
    }

    kitti::WriteTextFile(tmp_dir / "stage_manifest.txt", FormatStageManifest(m));
    fs::remove_all(final_dir);
    fs::rename(tmp_dir, final_dir);
    log::Info("stage " + std::to_string(stage_index) + " written to " + final_dir.string());
    return m;
  } catch (...) {
    fs::remove_all(tmp_dir, ec);
    throw;
  }
}

VerifyResult VerifyStage(const fs::path& stage_dir) {
  VerifyResult r;
  const StageManifest m = ParseStageManifest(kitti::ReadTextFile(stage_dir / "stage_manifest.txt"));
  const fs::path cfg_path = stage_dir / m.config_path;
  if (!fs::is_regular_file(cfg_path)) {
    r.problems.push_back("stored config missing: " + cfg_path.string());
  } else if (Sha256Hex(kitti::ReadTextFile(cfg_path)) != m.config_hash) {
    r.problems.push_back("config hash mismatch: " + cfg_path.string() + " was modified");
  }
  std::vector<fs::path> paths = {m.dataset_manifest, m.pseudo_labels, m.instance_db,
                                 m.background_db,    m.mixed_dir,     m.report};
  if (m.calibration) paths.push_back(*m.calibration);
  for (const auto& p : paths) {
    if (!fs::exists(stage_dir / p)) r.problems.push_back("artifact missing: " + (stage_dir / p).string());
  }
  r.ok = r.problems.empty();
  return r;
}

}  // namespace mixteach::pipeline
