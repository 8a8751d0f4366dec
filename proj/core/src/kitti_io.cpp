#include "mixteach/kitti_io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "mixteach/errors.hpp"
#include "mixteach/log.hpp"
#include "mixteach/text_format.hpp"

namespace mixteach::kitti {
namespace {

constexpr std::string_view kManifestHeader = "# mixteach dataset-manifest v1";

double RealField(std::string_view token, std::size_t line_no, std::string_view line,
                 const char* name) {
  auto v = text::ParseDouble(token);
  if (!v) {
    throw MalformedLineError(line_no, std::string(line),
                             std::string("bad ") + name + " '" + std::string(token) + "'");
  }
  return *v;
}

std::map<std::string, fs::path> StemsWithExtension(const fs::path& dir, std::string_view ext) {
  std::map<std::string, fs::path> out;
  if (dir.empty()) return out;
  if (!fs::is_directory(dir)) {
    throw Error(ErrorCode::kFileNotFound, "directory not found: " + dir.string());
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (!ext.empty() && entry.path().extension() != ext) continue;
    out.emplace(entry.path().stem().string(), entry.path());
  }
  return out;
}

std::string FormatLine(const Box3D& b, bool canonical) {
  auto real = [canonical](double v) {
    return canonical ? text::FormatFixed(v, 2) : text::FormatExact(v);
  };
  std::string s = b.category.name();
  s += ' ' + real(b.truncated);
  s += ' ' + std::to_string(b.occluded);
  s += ' ' + real(b.alpha);
  s += ' ' + real(b.bbox2d.left);
  s += ' ' + real(b.bbox2d.top);
  s += ' ' + real(b.bbox2d.right);
  s += ' ' + real(b.bbox2d.bottom);
  s += ' ' + real(b.dimensions.h);
  s += ' ' + real(b.dimensions.w);
  s += ' ' + real(b.dimensions.l);
  s += ' ' + real(b.location.x);
  s += ' ' + real(b.location.y);
  s += ' ' + real(b.location.z);
  s += ' ' + real(b.rotation_y);
  if (b.score) s += ' ' + (canonical ? text::FormatFixed(*b.score, 4) : text::FormatExact(*b.score));
  return s;
}

}  // namespace

std::string_view SplitName(Split split) {
  return split == Split::kLabeled ? "labeled" : "unlabeled";
}

const Frame* DatasetManifest::Find(std::string_view frame_id) const {
  for (const auto* list : {&labeled_frames, &unlabeled_frames}) {
    for (const Frame& f : *list) {
      if (f.frame_id == frame_id) return &f;
    }
  }
  return nullptr;
}

std::string ReadTextFile(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::kFileNotFound, "file not found: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteTextFile(const fs::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::kIoFailure, "write failed: " + path.string());
}

Box3D ParseLabelLine(std::string_view line, std::size_t line_no) {
  const auto tok = text::SplitWhitespace(line);
  if (tok.size() != 15 && tok.size() != 16) {
    throw MalformedLineError(line_no, std::string(line),
                             "expected 15 or 16 fields, got " + std::to_string(tok.size()));
  }
  Box3D b;
  b.category = Category(std::string(tok[0]));
  b.truncated = RealField(tok[1], line_no, line, "truncated");
  const auto occ = text::ParseInt(tok[2]);
  if (!occ) throw MalformedLineError(line_no, std::string(line), "bad occluded");
  b.occluded = static_cast<int>(*occ);
  b.alpha = RealField(tok[3], line_no, line, "alpha");
  b.bbox2d.left = RealField(tok[4], line_no, line, "bbox left");
  b.bbox2d.top = RealField(tok[5], line_no, line, "bbox top");
  b.bbox2d.right = RealField(tok[6], line_no, line, "bbox right");
  b.bbox2d.bottom = RealField(tok[7], line_no, line, "bbox bottom");
  b.dimensions.h = RealField(tok[8], line_no, line, "height");
  b.dimensions.w = RealField(tok[9], line_no, line, "width");
  b.dimensions.l = RealField(tok[10], line_no, line, "length");
  b.location.x = RealField(tok[11], line_no, line, "x");
  b.location.y = RealField(tok[12], line_no, line, "y");
  b.location.z = RealField(tok[13], line_no, line, "z");
  b.rotation_y = RealField(tok[14], line_no, line, "rotation_y");
  if (tok.size() == 16) b.score = RealField(tok[15], line_no, line, "score");
  return b;
}

std::vector<Box3D> ParseLabelText(std::string_view text) {
  std::vector<Box3D> boxes;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    ++line_no;
    pos = nl + 1;
    if (text::Trim(line).empty()) continue;
    boxes.push_back(ParseLabelLine(line, line_no));
  }
  return boxes;
}

std::vector<Box3D> ParseLabelFile(const fs::path& path) {
  return ParseLabelText(ReadTextFile(path));
}

std::string FormatLabelLine(const Box3D& box) { return FormatLine(box, true); }

std::string FormatLabelLineExact(const Box3D& box) { return FormatLine(box, false); }

std::string FormatLabelText(const std::vector<Box3D>& boxes) {
  std::string out;
  for (const Box3D& b : boxes) {
    out += FormatLine(b, true);
    out += '\n';
  }
  return out;
}

void WriteLabelFile(const std::vector<Box3D>& boxes, const fs::path& path, bool canonical_format) {
  std::string out;
  for (const Box3D& b : boxes) {
    out += FormatLine(b, canonical_format);
    out += '\n';
  }
  WriteTextFile(path, out);
}

CameraProjection ParseCalibText(std::string_view text) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text::Trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    if (!line.starts_with("P2:")) continue;
    const auto tok = text::SplitWhitespace(line.substr(3));
    if (tok.size() != 12) {
      throw Error(ErrorCode::kMalformedCalib,
                  "P2 needs 12 values, got " + std::to_string(tok.size()));
    }
    CameraProjection cam;
    for (std::size_t i = 0; i < 12; ++i) {
      auto v = text::ParseDouble(tok[i]);
      if (!v) throw Error(ErrorCode::kMalformedCalib, "bad P2 value '" + std::string(tok[i]) + "'");
      cam.p[i] = *v;
    }
    return cam;
  }
  throw Error(ErrorCode::kMissingP2, "no P2: line in calibration");
}

CameraProjection ParseCalibFile(const fs::path& path) {
  try {
    return ParseCalibText(ReadTextFile(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kMissingP2 || e.code() == ErrorCode::kMalformedCalib) {
      throw Error(e.code(), path.string() + ": " + e.what());
    }
    throw;
  }
}

ScanResult ScanDataset(const ScanOptions& options) {
  const auto images = StemsWithExtension(options.image_dir, ".png");
  const auto calibs = StemsWithExtension(options.calib_dir, ".txt");
  const auto labels = StemsWithExtension(options.labeled_dir, ".txt");

  std::set<std::string> unlabeled_candidates;
  if (!options.unlabeled_dir.empty()) {
    for (const auto& [stem, path] : StemsWithExtension(options.unlabeled_dir, "")) {
      unlabeled_candidates.insert(stem);
    }
  } else {
    for (const auto& [stem, path] : images) {
      if (!labels.contains(stem)) unlabeled_candidates.insert(stem);
    }
  }

  ScanResult result;
  auto missing_component = [&](const std::string& stem) -> std::optional<std::string> {
    if (!images.contains(stem)) return "image";
    if (!calibs.contains(stem)) return "calib";
    return std::nullopt;
  };

  for (const auto& [stem, label_path] : labels) {
    if (auto missing = missing_component(stem)) {
      result.orphans.push_back({stem, *missing});
      continue;
    }
    Frame f;
    f.frame_id = stem;
    f.split = Split::kLabeled;
    f.image_path = images.at(stem);
    f.calib_path = calibs.at(stem);
    f.calib = ParseCalibFile(f.calib_path);
    f.label_path = label_path;
    f.labels = ParseLabelFile(label_path);
    result.manifest.labeled_frames.push_back(std::move(f));
  }

  for (const std::string& stem : unlabeled_candidates) {
    if (labels.contains(stem) || options.unlabeled_exclusions.contains(stem)) continue;
    if (auto missing = missing_component(stem)) {
      result.orphans.push_back({stem, *missing});
      continue;
    }
    Frame f;
    f.frame_id = stem;
    f.split = Split::kUnlabeled;
    f.image_path = images.at(stem);
    f.calib_path = calibs.at(stem);
    f.calib = ParseCalibFile(f.calib_path);
    result.manifest.unlabeled_frames.push_back(std::move(f));
  }

  std::sort(result.orphans.begin(), result.orphans.end(),
            [](const OrphanFrame& a, const OrphanFrame& b) { return a.frame_id < b.frame_id; });
  for (const OrphanFrame& o : result.orphans) {
    log::Warn("OrphanFrame " + o.frame_id + ": missing " + o.missing);
  }
  return result;
}

void WriteManifest(const DatasetManifest& manifest, const fs::path& path) {
  std::string out(kManifestHeader);
  out += "\n# columns: split frame_id image_path calib_path label_path\n";
  for (const auto* list : {&manifest.labeled_frames, &manifest.unlabeled_frames}) {
    for (const Frame& f : *list) {
      out += std::string(SplitName(f.split)) + ' ' + f.frame_id + ' ' + f.image_path.string() + ' ' +
             f.calib_path.string() + ' ' + (f.label_path ? f.label_path->string() : "-") + '\n';
    }
  }
  WriteTextFile(path, out);
}

DatasetManifest ReadManifest(const fs::path& path) {
  const std::string content = ReadTextFile(path);
  std::istringstream in(content);
  std::string line;
  std::size_t line_no = 0;
  DatasetManifest manifest;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (text::Trim(line) != kManifestHeader) {
        throw Error(ErrorCode::kParseError, path.string() + ": unsupported manifest header");
      }
      continue;
    }
    if (text::Trim(line).empty() || line.front() == '#') continue;
    const auto tok = text::SplitWhitespace(line);
    if (tok.size() != 5) throw MalformedLineError(line_no, line, "manifest row needs 5 fields");
    Frame f;
    f.frame_id = std::string(tok[1]);
    f.image_path = std::string(tok[2]);
    f.calib_path = std::string(tok[3]);
    f.calib = ParseCalibFile(f.calib_path);
    if (tok[0] == "labeled") {
      f.split = Split::kLabeled;
      f.label_path = fs::path(std::string(tok[4]));
      f.labels = ParseLabelFile(*f.label_path);
      manifest.labeled_frames.push_back(std::move(f));
    } else if (tok[0] == "unlabeled") {
      f.split = Split::kUnlabeled;
      manifest.unlabeled_frames.push_back(std::move(f));
    } else {
      throw MalformedLineError(line_no, line, "unknown split");
    }
  }
  return manifest;
}

}  // namespace mixteach::kitti
