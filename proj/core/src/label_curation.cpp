#include "mixteach/label_curation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mixteach/errors.hpp"
#include "mixteach/log.hpp"
#include "mixteach/parallel.hpp"
#include "mixteach/text_format.hpp"

namespace mixteach::curation {
namespace {

constexpr std::string_view kInstanceIndexHeader = "# mixteach instance-db v1";
constexpr std::string_view kBackgroundIndexHeader = "# mixteach background-db v1";

std::string FormatCalib(const CameraProjection& cam) {
  std::string out;
  for (std::size_t i = 0; i < cam.p.size(); ++i) {
    if (i) out += ' ';
    out += text::FormatExact(cam.p[i]);
  }
  return out;
}

CameraProjection ParseCalibTokens(const std::vector<std::string_view>& tok, std::size_t offset,
                                  std::size_t line_no, const std::string& line) {
  CameraProjection cam;
  for (std::size_t i = 0; i < 12; ++i) {
    auto v = text::ParseDouble(tok[offset + i]);
    if (!v) throw MalformedLineError(line_no, line, "bad P2 entry");
    cam.p[i] = *v;
  }
  return cam;
}

void ResetDatabaseDir(const fs::path& dir) {
  std::error_code ec;
  fs::remove_all(dir / "patches", ec);
  fs::remove(dir / "index.txt", ec);
  fs::remove(dir / "VERSION", ec);
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoFailure, "cannot create " + dir.string() + ": " + ec.message());
}

void CheckVersion(const fs::path& dir) {
  const std::string version(text::Trim(kitti::ReadTextFile(dir / "VERSION")));
  if (version != std::to_string(kDatabaseSchemaVersion)) {
    throw Error(ErrorCode::kParseError,
                dir.string() + ": unsupported database schema version '" + version + "'");
  }
}

std::vector<std::string> Lines(const std::string& content) {
  std::vector<std::string> lines;
  std::istringstream in(content);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

fs::path RelativeTo(const fs::path& target, const fs::path& base) {
  const fs::path abs_target = fs::absolute(target).lexically_normal();
  const fs::path abs_base = fs::absolute(base).lexically_normal();
  fs::path rel = abs_target.lexically_relative(abs_base);
  return rel.empty() ? abs_target : rel;
}

}  // namespace

void Validate(const CurationConfig& cfg) {
  if (!(cfg.conf_thr >= 0.0 && cfg.conf_thr <= 1.0)) {
    throw ValidationError("curation.conf_thr", "must lie in [0, 1]");
  }
  if (!(cfg.unc_thr >= 0.0 && cfg.unc_thr <= 1.0)) {
    throw ValidationError("curation.unc_thr", "must lie in [0, 1]");
  }
  if (cfg.categories.empty()) throw ValidationError("curation.categories", "must not be empty");
}

Rect PixelRect::ToRect() const {
  return Rect{static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1),
              static_cast<double>(y1)};
}

std::vector<ensemble::ScoredBox> ConfidenceFilter(std::span<const ensemble::ScoredBox> scored,
                                                  const CurationConfig& cfg) {
  std::vector<ensemble::ScoredBox> out;
  for (const auto& s : scored) {
    if (s.box.score && *s.box.score > cfg.conf_thr) out.push_back(s);
  }
  return out;
}

std::vector<ensemble::ScoredBox> UncertaintyFilter(std::span<const ensemble::ScoredBox> scored,
                                                   const CurationConfig& cfg) {
  std::vector<ensemble::ScoredBox> out;
  for (const auto& s : scored) {
    if (s.uncertainty < cfg.unc_thr) out.push_back(s);
  }
  return out;
}

std::vector<ensemble::ScoredBox> CuratePseudoLabels(std::span<const ensemble::ScoredBox> scored,
                                                    const CurationConfig& cfg) {
  std::vector<ensemble::ScoredBox> out;
  for (const auto& s : scored) {
    if (!cfg.categories.contains(s.box.category.name())) continue;
    if (!(s.box.score && *s.box.score > cfg.conf_thr)) continue;
    if (!(s.uncertainty < cfg.unc_thr)) continue;
    out.push_back(s);
  }
  return out;
}

bool IsBackground(const ensemble::EnsemblePredictions& preds) { return preds.boxes.empty(); }

bool IsBackground(const ScoredFrame& frame, const CurationConfig& cfg) {
  if (!cfg.existence_uses_filtered) return IsBackground(frame.predictions);
  return CuratePseudoLabels(frame.scored, cfg).empty();
}

std::optional<PixelRect> CropWindow(const Box3D& box, const CameraProjection& calib, int image_width,
                                    int image_height) {
  Rect r = box.bbox2d;
  if (!r.IsValid()) {
    try {
      r = geometry::ProjectToImage(box, calib);
    } catch (const Error&) {
      return std::nullopt;
    }
  }
  PixelRect p;
  p.x0 = static_cast<int>(std::clamp(std::floor(r.left), 0.0, static_cast<double>(image_width)));
  p.y0 = static_cast<int>(std::clamp(std::floor(r.top), 0.0, static_cast<double>(image_height)));
  p.x1 = static_cast<int>(std::clamp(std::ceil(r.right), 0.0, static_cast<double>(image_width)));
  p.y1 = static_cast<int>(std::clamp(std::ceil(r.bottom), 0.0, static_cast<double>(image_height)));
  if (p.width() <= 0 || p.height() <= 0) return std::nullopt;
  return p;
}

InstanceDatabase BuildInstanceDatabase(const kitti::DatasetManifest& manifest,
                                       std::span<const ScoredFrame> frames,
                                       const CurationConfig& cfg, const fs::path& out_dir,
                                       unsigned workers) {
  Validate(cfg);
  ResetDatabaseDir(out_dir);
  fs::create_directories(out_dir / "patches");

  // Crop frames in parallel; each slot is owned by one index.
  std::vector<std::vector<InstanceRecord>> per_frame(frames.size());
  ParallelFor(frames.size(), workers, [&](std::size_t i) {
    const ScoredFrame& sf = frames[i];
    const std::string& frame_id = sf.predictions.frame_id;
    const kitti::Frame* frame = manifest.Find(frame_id);
    if (frame == nullptr) {
      throw Error(ErrorCode::kInvalidArgument, "frame " + frame_id + " not in manifest");
    }
    if (frame->split != kitti::Split::kUnlabeled) {
      log::Warn("skipping labeled frame " + frame_id + " for instance database");
      return;
    }
    const auto curated = CuratePseudoLabels(sf.scored, cfg);
    if (curated.empty()) return;
    const Image image = ReadPng(frame->image_path);
    for (std::size_t k = 0; k < curated.size(); ++k) {
      const auto window = CropWindow(curated[k].box, frame->calib, image.width(), image.height());
      if (!window) {
        log::Warn("CropOutOfImage: frame " + frame_id + " box " + std::to_string(k) + " skipped");
        continue;
      }
      InstanceRecord rec;
      char suffix[16];
      std::snprintf(suffix, sizeof(suffix), "_%03zu", k);
      rec.record_id = frame_id + suffix;
      rec.patch = image.Crop(window->x0, window->y0, window->width(), window->height());
      rec.pseudo_label = curated[k].box;
      rec.uncertainty = curated[k].uncertainty;
      rec.source_frame_id = frame_id;
      rec.source_calib = frame->calib;
      rec.crop_rect = *window;
      WritePng(rec.patch, out_dir / "patches" / (rec.record_id + ".png"));
      per_frame[i].push_back(std::move(rec));
    }
  });

  InstanceDatabase db;
  db.root = out_dir;
  for (auto& recs : per_frame) {
    for (auto& r : recs) db.records.push_back(std::move(r));
  }
  std::sort(db.records.begin(), db.records.end(),
            [](const InstanceRecord& a, const InstanceRecord& b) { return a.record_id < b.record_id; });

  std::string index(kInstanceIndexHeader);
  index +=
      "\n# columns: record_id source_frame_id patch crop_x0 crop_y0 crop_x1 crop_y1 uncertainty "
      "P2[12] label[16]\n";
  for (const InstanceRecord& r : db.records) {
    index += r.record_id + ' ' + r.source_frame_id + " patches/" + r.record_id + ".png " +
             std::to_string(r.crop_rect.x0) + ' ' + std::to_string(r.crop_rect.y0) + ' ' +
             std::to_string(r.crop_rect.x1) + ' ' + std::to_string(r.crop_rect.y1) + ' ' +
             text::FormatExact(r.uncertainty) + ' ' + FormatCalib(r.source_calib) + ' ' +
             kitti::FormatLabelLineExact(r.pseudo_label) + '\n';
  }
  kitti::WriteTextFile(out_dir / "index.txt", index);
  kitti::WriteTextFile(out_dir / "VERSION", std::to_string(kDatabaseSchemaVersion) + "\n");
  return db;
}

BackgroundDatabase BuildBackgroundDatabase(const kitti::DatasetManifest& manifest,
                                           std::span<const ScoredFrame> frames,
                                           const CurationConfig& cfg, const fs::path& out_dir) {
  ResetDatabaseDir(out_dir);
  BackgroundDatabase db;
  db.root = out_dir;
  for (const ScoredFrame& sf : frames) {
    const kitti::Frame* frame = manifest.Find(sf.predictions.frame_id);
    if (frame == nullptr || frame->split != kitti::Split::kUnlabeled) continue;
    if (!IsBackground(sf, cfg)) continue;
    db.records.push_back({frame->frame_id, frame->image_path, frame->calib});
  }
  std::sort(db.records.begin(), db.records.end(),
            [](const BackgroundRecord& a, const BackgroundRecord& b) { return a.frame_id < b.frame_id; });

  std::string index(kBackgroundIndexHeader);
  index += "\n# columns: frame_id image_path P2[12]\n";
  for (const BackgroundRecord& r : db.records) {
    index += r.frame_id + ' ' + RelativeTo(r.image_path, out_dir).string() + ' ' +
             FormatCalib(r.calib) + '\n';
  }
  kitti::WriteTextFile(out_dir / "index.txt", index);
  kitti::WriteTextFile(out_dir / "VERSION", std::to_string(kDatabaseSchemaVersion) + "\n");
  return db;
}

InstanceDatabase LoadInstanceDatabase(const fs::path& dir) {
  CheckVersion(dir);
  const auto lines = Lines(kitti::ReadTextFile(dir / "index.txt"));
  if (lines.empty() || text::Trim(lines.front()) != kInstanceIndexHeader) {
    throw Error(ErrorCode::kParseError, (dir / "index.txt").string() + ": bad header");
  }
  InstanceDatabase db;
  db.root = dir;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::string& line = lines[n];
    if (text::Trim(line).empty() || line.front() == '#') continue;
    const auto tok = text::SplitWhitespace(line);
    if (tok.size() != 8 + 12 + 16) throw MalformedLineError(n + 1, line, "instance row needs 36 fields");
    InstanceRecord r;
    r.record_id = std::string(tok[0]);
    r.source_frame_id = std::string(tok[1]);
    const fs::path patch_path = dir / std::string(tok[2]);
    int* corners[4] = {&r.crop_rect.x0, &r.crop_rect.y0, &r.crop_rect.x1, &r.crop_rect.y1};
    for (std::size_t c = 0; c < 4; ++c) {
      auto v = text::ParseInt(tok[3 + c]);
      if (!v) throw MalformedLineError(n + 1, line, "bad crop coordinate");
      *corners[c] = static_cast<int>(*v);
    }
    auto u = text::ParseDouble(tok[7]);
    if (!u) throw MalformedLineError(n + 1, line, "bad uncertainty");
    r.uncertainty = *u;
    r.source_calib = ParseCalibTokens(tok, 8, n + 1, line);
    std::string label;
    for (std::size_t t = 20; t < tok.size(); ++t) {
      if (t > 20) label += ' ';
      label.append(tok[t]);
    }
    r.pseudo_label = kitti::ParseLabelLine(label, n + 1);
    r.patch = ReadPng(patch_path);
    if (r.patch.width() != r.crop_rect.width() || r.patch.height() != r.crop_rect.height()) {
      throw Error(ErrorCode::kParseError, "patch " + patch_path.string() + " size disagrees with index");
    }
    db.records.push_back(std::move(r));
  }
  return db;
}

BackgroundDatabase LoadBackgroundDatabase(const fs::path& dir) {
  CheckVersion(dir);
  const auto lines = Lines(kitti::ReadTextFile(dir / "index.txt"));
  if (lines.empty() || text::Trim(lines.front()) != kBackgroundIndexHeader) {
    throw Error(ErrorCode::kParseError, (dir / "index.txt").string() + ": bad header");
  }
  BackgroundDatabase db;
  db.root = dir;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::string& line = lines[n];
    if (text::Trim(line).empty() || line.front() == '#') continue;
    const auto tok = text::SplitWhitespace(line);
    if (tok.size() != 14) throw MalformedLineError(n + 1, line, "background row needs 14 fields");
    BackgroundRecord r;
    r.frame_id = std::string(tok[0]);
    const fs::path p{std::string(tok[1])};
    r.image_path = p.is_absolute() ? p : (dir / p).lexically_normal();
    r.calib = ParseCalibTokens(tok, 2, n + 1, line);
    db.records.push_back(std::move(r));
  }
  return db;
}

}  // namespace mixteach::curation
