// mixteach: command-line front end for the pseudo-label / mixed-data pipeline.
//
// Exit status: 0 success, 2 invalid config or arguments, 3 missing input,
// 4 internal error. Failures print one line to stderr:
//   error: <ErrorCode>: <message>

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "mixteach/config.hpp"
#include "mixteach/errors.hpp"
#include "mixteach/evaluation.hpp"
#include "mixteach/kitti_io.hpp"
#include "mixteach/label_curation.hpp"
#include "mixteach/log.hpp"
#include "mixteach/mix_synthesis.hpp"
#include "mixteach/pipeline.hpp"
#include "mixteach/text_format.hpp"

namespace fs = std::filesystem;
using namespace mixteach;

namespace {

struct Common {
  std::string config;
  std::optional<unsigned> workers;
  std::optional<std::uint64_t> seed;
  std::string out;
  int stage = 1;
  bool verbose = false;
};

void AddCommon(CLI::App* cmd, Common& c, bool config_required = true) {
  auto* opt = cmd->add_option("--config", c.config, "pipeline config file");
  if (config_required) opt->required();
  cmd->add_option("--workers", c.workers, "worker threads (overrides pipeline.workers)")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", c.seed, "master seed (overrides pipeline.master_seed)");
  cmd->add_option("--out", c.out, "output location");
  cmd->add_flag("-v,--verbose", c.verbose, "debug logging");
}

void AddStage(CLI::App* cmd, Common& c) {
  cmd->add_option("--stage", c.stage, "stage whose [stage.K] overrides apply")->check(CLI::PositiveNumber);
}

pipeline::PipelineConfig Load(const Common& c) {
  auto cfg = pipeline::LoadConfig(c.config);
  if (c.workers) cfg.workers = *c.workers;
  if (c.seed) cfg.mix.master_seed = *c.seed;
  return cfg;
}

pipeline::PipelineConfig LoadForStage(const Common& c) {
  const auto cfg = Load(c);
  if (c.stage > cfg.stage_count) {
    throw ValidationError("--stage", std::to_string(c.stage) + " exceeds pipeline.stage_count");
  }
  return pipeline::EffectiveConfig(cfg, c.stage);
}

fs::path OutOr(const Common& c, const fs::path& fallback) { return c.out.empty() ? fallback : fs::path(c.out); }

void Emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
  } else {
    kitti::WriteTextFile(out, text);
  }
}

int CmdValidate(const Common& c, const std::string& stage_dir) {
  if (!stage_dir.empty()) {
    const auto r = pipeline::VerifyStage(stage_dir);
    for (const auto& p : r.problems) log::Error(p);
    if (!r.ok) throw ValidationError("stage_manifest", "verification failed for " + stage_dir);
    std::cout << "ok " << stage_dir << "\n";
    return 0;
  }
  if (c.config.empty()) throw ValidationError("--config", "required");
  std::cout << pipeline::CanonicalConfigText(Load(c));
  return 0;
}

int CmdScore(const Common& c, const std::string& frame) {
  const auto cfg = LoadForStage(c);
  auto manifest = pipeline::ScanFromConfig(cfg);
  if (!frame.empty()) {
    const kitti::Frame* f = manifest.Find(frame);
    if (f == nullptr) throw Error(ErrorCode::kFileNotFound, "frame not in dataset: " + frame);
    kitti::DatasetManifest one;
    one.unlabeled_frames.push_back(*f);
    manifest = std::move(one);
  }
  const auto scored = pipeline::ScoreFrames(manifest, cfg.prediction_dirs, cfg.uncertainty, cfg.workers);
  std::string out = "# frame_id uncertainty label\n";
  for (std::size_t i = 0; i < scored.size(); ++i) {
    for (const auto& sb : scored[i].scored) {
      out += manifest.unlabeled_frames[i].frame_id + ' ' + text::FormatFixed(sb.uncertainty, 6) + ' ' +
             kitti::FormatLabelLine(sb.box) + '\n';
    }
  }
  Emit(out, c.out);
  return 0;
}

int CmdCurate(const Common& c) {
  const auto cfg = LoadForStage(c);
  const auto manifest = pipeline::ScanFromConfig(cfg);
  const auto scored = pipeline::ScoreFrames(manifest, cfg.prediction_dirs, cfg.uncertainty, cfg.workers);
  const fs::path out = OutOr(c, cfg.output_root / "pseudo_labels");
  pipeline::WritePseudoLabels(manifest, scored, cfg.curation, out);
  std::size_t kept = 0;
  std::size_t total = 0;
  for (const auto& f : scored) {
    total += f.scored.size();
    kept += pipeline::CuratedBoxes(f, cfg.curation).size();
  }
  std::cout << "frames " << scored.size() << "\nclusters " << total << "\npseudo_labels " << kept << "\nout "
            << out.string() << "\n";
  return 0;
}

int CmdDbBuild(const Common& c) {
  const auto cfg = LoadForStage(c);
  const auto manifest = pipeline::ScanFromConfig(cfg);
  const auto scored = pipeline::ScoreFrames(manifest, cfg.prediction_dirs, cfg.uncertainty, cfg.workers);
  const fs::path out = OutOr(c, cfg.output_root / "db");
  const auto inst = curation::BuildInstanceDatabase(manifest, scored, cfg.curation, out / "instance_db", cfg.workers);
  const auto bg = curation::BuildBackgroundDatabase(manifest, scored, cfg.curation, out / "background_db");
  std::cout << "instances " << inst.records.size() << "\nbackgrounds " << bg.records.size() << "\nout "
            << out.string() << "\n";
  return 0;
}

int CmdMix(const Common& c, std::optional<std::size_t> count, const std::string& db) {
  const auto cfg = LoadForStage(c);
  const auto manifest = pipeline::ScanFromConfig(cfg);
  const fs::path out = OutOr(c, cfg.output_root / "mixed");
  curation::InstanceDatabase inst;
  curation::BackgroundDatabase bg;
  if (!db.empty()) {
    inst = curation::LoadInstanceDatabase(fs::path(db) / "instance_db");
    bg = curation::LoadBackgroundDatabase(fs::path(db) / "background_db");
  } else {
    const auto scored = pipeline::ScoreFrames(manifest, cfg.prediction_dirs, cfg.uncertainty, cfg.workers);
    inst = curation::BuildInstanceDatabase(manifest, scored, cfg.curation, out / "instance_db", cfg.workers);
    bg = curation::BuildBackgroundDatabase(manifest, scored, cfg.curation, out / "background_db");
  }
  const auto epoch = mix::GenerateEpoch(manifest.labeled_frames, inst, bg, cfg.mix, count.value_or(cfg.sample_count),
                                        out, cfg.workers);
  std::cout << "samples " << epoch.samples.size() << "\nmanifest " << epoch.manifest_path.string() << "\n";
  return 0;
}

int CmdEval(const Common& c, const std::string& pred_dir, const std::string& gt_dir, std::optional<double> iou,
            const std::string& metric_name, std::vector<std::string> categories) {
  double iou_thr = 0.7;
  eval::IouMetric metric = eval::IouMetric::k3d;
  if (!c.config.empty()) {
    const auto cfg = Load(c);
    iou_thr = cfg.eval_iou_thr;
    metric = cfg.eval_metric;
    if (categories.empty()) categories = cfg.eval_categories;
  }
  if (iou) iou_thr = *iou;
  if (!metric_name.empty()) metric = metric_name == "bev" ? eval::IouMetric::kBev : eval::IouMetric::k3d;
  if (categories.empty()) categories = {"Car", "Pedestrian", "Cyclist"};
  eval::EvalConfig check;
  check.iou_thr = iou_thr;
  eval::Validate(check);
  if (!fs::is_directory(gt_dir)) throw Error(ErrorCode::kFileNotFound, "ground-truth directory not found: " + gt_dir);
  if (!fs::is_directory(pred_dir)) throw Error(ErrorCode::kFileNotFound, "prediction directory not found: " + pred_dir);

  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  std::vector<eval::FrameBoxes> frames;
  std::size_t missing = 0;
  for (const auto& id : ids) {
    eval::FrameBoxes f;
    f.gts = kitti::ParseLabelFile(fs::path(gt_dir) / (id + ".txt"));
    const fs::path p = fs::path(pred_dir) / (id + ".txt");
    if (fs::is_regular_file(p)) {
      f.preds = kitti::ParseLabelFile(p);
    } else {
      ++missing;
    }
    frames.push_back(std::move(f));
  }
  if (missing > 0) log::Warn(std::to_string(missing) + " frame(s) without a prediction file, treated as empty");
  const auto rows = eval::Evaluate(frames, categories, iou_thr, metric);
  Emit(eval::FormatReport(rows, iou_thr, metric), c.out);
  return 0;
}

int CmdStage(const Common& c) {
  auto cfg = Load(c);
  if (!c.out.empty()) cfg.output_root = fs::absolute(c.out).lexically_normal();
  const auto m = pipeline::RunStage(cfg, c.stage);
  std::cout << pipeline::FormatStageManifest(m);
  return 0;
}

int CmdStats(const Common& c) {
  const auto cfg = LoadForStage(c);
  if (cfg.dataset.gt_dir.empty()) throw ValidationError("dataset.gt_dir", "required for stats");
  const auto manifest = pipeline::ScanFromConfig(cfg);
  const auto scored = pipeline::ScoreFrames(manifest, cfg.prediction_dirs, cfg.uncertainty, cfg.workers);
  const auto gt = pipeline::LoadGroundTruth(manifest, cfg.dataset.gt_dir);
  Emit(ensemble::FormatCalibrationCsv(pipeline::CalibrationStats(scored, gt)), c.out);
  return 0;
}

int Fail(ErrorCode code, const std::string& message) {
  std::cerr << "error: " << ErrorCodeName(code) << ": " << message << "\n";
  return ExitStatusFor(code);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixteach: ensemble pseudo labels, instance/background databases and mixed training data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "mixteach 0.1.0");

  Common common;
  std::string stage_dir;
  std::string frame;
  std::optional<std::size_t> count;
  std::string db;
  std::string pred_dir;
  std::string gt_dir;
  std::optional<double> iou;
  std::string metric;
  std::vector<std::string> categories;

  auto* validate = app.add_subcommand("validate", "validate a config (prints it fully defaulted) or a stage directory");
  AddCommon(validate, common, false);
  validate->add_option("--stage-dir", stage_dir, "verify a stage manifest and its config hash");

  auto* score = app.add_subcommand("score", "cluster ensemble predictions and print (box, u) rows");
  AddCommon(score, common);
  AddStage(score, common);
  score->add_option("--frame", frame, "only this frame");

  auto* curate = app.add_subcommand("curate", "write filtered pseudo labels for the unlabeled frames");
  AddCommon(curate, common);
  AddStage(curate, common);

  auto* db_build = app.add_subcommand("db-build", "build the instance and background databases");
  AddCommon(db_build, common);
  AddStage(db_build, common);

  auto* mix_cmd = app.add_subcommand("mix", "generate a mixed epoch");
  AddCommon(mix_cmd, common);
  AddStage(mix_cmd, common);
  mix_cmd->add_option("--count", count, "number of samples (default mix.sample_count)");
  mix_cmd->add_option("--db", db, "directory holding instance_db/ and background_db/ (built if omitted)");

  auto* eval_cmd = app.add_subcommand("eval", "AP40 report of a prediction directory against ground truth");
  AddCommon(eval_cmd, common, false);
  eval_cmd->add_option("--pred", pred_dir, "prediction label directory")->required();
  eval_cmd->add_option("--gt", gt_dir, "ground-truth label directory")->required();
  eval_cmd->add_option("--iou", iou, "IoU threshold");
  eval_cmd->add_option("--metric", metric, "3d or bev")->check(CLI::IsMember({"3d", "bev"}));
  eval_cmd->add_option("--categories", categories, "categories to report")->delimiter(',');

  auto* stage = app.add_subcommand("stage", "run one full stage and write its manifest");
  AddCommon(stage, common);
  AddStage(stage, common);

  auto* stats = app.add_subcommand("stats", "export (score, u, best IoU3D with GT) rows as CSV");
  AddCommon(stats, common);
  AddStage(stats, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return Fail(ErrorCode::kInvalidArgument, e.what());
  }

  log::SetLevel(common.verbose ? log::Level::kDebug : log::Level::kInfo);
  try {
    if (*validate) return CmdValidate(common, stage_dir);
    if (*score) return CmdScore(common, frame);
    if (*curate) return CmdCurate(common);
    if (*db_build) return CmdDbBuild(common);
    if (*mix_cmd) return CmdMix(common, count, db);
    if (*eval_cmd) return CmdEval(common, pred_dir, gt_dir, iou, metric, categories);
    if (*stage) return CmdStage(common);
    if (*stats) return CmdStats(common);
  } catch (const Error& e) {
    return Fail(e.code(), e.what());
  } catch (const std::exception& e) {
    return Fail(ErrorCode::kInternal, e.what());
  }
  return Fail(ErrorCode::kInternal, "no subcommand handled");
}
