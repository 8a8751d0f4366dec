#include "test_support.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mixteach/kitti_io.hpp"
#include "mixteach/text_format.hpp"

namespace mixteach::testing {
namespace {

struct Footprint {
  double cx, cz, c, s, half_l, half_w;
  bool Contains(double px, double pz) const {
    const double dx = px - cx;
    const double dz = pz - cz;
    const double lx = c * dx - s * dz;
    const double lz = s * dx + c * dz;
    return std::abs(lx) <= half_l && std::abs(lz) <= half_w;
  }
};

Footprint FootprintOf(const Box3D& b) {
  return {b.location.x, b.location.z, std::cos(b.rotation_y), std::sin(b.rotation_y),
          b.dimensions.l / 2, b.dimensions.w / 2};
}

void ExtendBounds(const Box3D& b, double& x0, double& x1, double& z0, double& z1) {
  const double c = std::cos(b.rotation_y);
  const double s = std::sin(b.rotation_y);
  for (double sx : {-1.0, 1.0}) {
    for (double sz : {-1.0, 1.0}) {
      const double lx = sx * b.dimensions.l / 2;
      const double lz = sz * b.dimensions.w / 2;
      const double x = b.location.x + c * lx + s * lz;
      const double z = b.location.z - s * lx + c * lz;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      z0 = std::min(z0, z);
      z1 = std::max(z1, z);
    }
  }
}

struct CellCounts {
  long long a = 0, b = 0, both = 0;
};

CellCounts CountCells(const Box3D& a, const Box3D& b, int cells) {
  double x0 = 1e300, x1 = -1e300, z0 = 1e300, z1 = -1e300;
  ExtendBounds(a, x0, x1, z0, z1);
  ExtendBounds(b, x0, x1, z0, z1);
  const Footprint fa = FootprintOf(a);
  const Footprint fb = FootprintOf(b);
  const double dx = (x1 - x0) / cells;
  const double dz = (z1 - z0) / cells;
  CellCounts n;
  for (int i = 0; i < cells; ++i) {
    const double px = x0 + (i + 0.5) * dx;
    for (int j = 0; j < cells; ++j) {
      const double pz = z0 + (j + 0.5) * dz;
      const bool ia = fa.Contains(px, pz);
      const bool ib = fb.Contains(px, pz);
      n.a += ia;
      n.b += ib;
      n.both += ia && ib;
    }
  }
  return n;
}

}  // namespace

Box3D MakeBox(const std::string& category, double x, double y, double z, double h, double w, double l, double ry,
              std::optional<double> score) {
  Box3D b;
  b.category = Category(category);
  b.location = {x, y, z};
  b.dimensions = {h, w, l};
  b.rotation_y = ry;
  b.bbox2d = {100.0, 100.0, 150.0, 140.0};
  b.score = score;
  return b;
}

CameraProjection KittiP2() {
  CameraProjection p;
  p.p = {7.215377e+02, 0.0, 6.095593e+02, 4.485728e+01, 0.0, 7.215377e+02,
         1.728540e+02, 2.163791e-01, 0.0, 0.0, 1.0, 2.745884e-03};
  return p;
}

CameraProjection IdentityLikeP() {
  CameraProjection p;
  p.p = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  return p;
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("mixteach_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string ReadBytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::pair<std::string, std::string>> TreeContents(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), root).generic_string(), ReadBytes(e.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string CompareTrees(const fs::path& a, const fs::path& b) {
  const auto ta = TreeContents(a);
  const auto tb = TreeContents(b);
  if (ta.size() != tb.size()) {
    return "file count " + std::to_string(ta.size()) + " vs " + std::to_string(tb.size());
  }
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].first != tb[i].first) return "file set differs at " + ta[i].first + " / " + tb[i].first;
    if (ta[i].second != tb[i].second) return "content differs: " + ta[i].first;
  }
  return {};
}

double VoxelIou3d(const Box3D& a, const Box3D& b, int cells, int slabs) {
  const CellCounts n = CountCells(a, b, cells);
  const double y0 = std::min(a.location.y - a.dimensions.h, b.location.y - b.dimensions.h);
  const double y1 = std::max(a.location.y, b.location.y);
  const double dy = (y1 - y0) / slabs;
  long long sa = 0, sb = 0, sboth = 0;
  for (int k = 0; k < slabs; ++k) {
    const double y = y0 + (k + 0.5) * dy;
    const bool ia = y >= a.location.y - a.dimensions.h && y <= a.location.y;
    const bool ib = y >= b.location.y - b.dimensions.h && y <= b.location.y;
    sa += ia;
    sb += ib;
    sboth += ia && ib;
  }
  const double va = double(n.a) * double(sa);
  const double vb = double(n.b) * double(sb);
  const double vi = double(n.both) * double(sboth);
  const double u = va + vb - vi;
  return u > 0 ? vi / u : 0.0;
}

double RasterFootprintIntersection(const Box3D& a, const Box3D& b, int cells) {
  double x0 = 1e300, x1 = -1e300, z0 = 1e300, z1 = -1e300;
  ExtendBounds(a, x0, x1, z0, z1);
  ExtendBounds(b, x0, x1, z0, z1);
  const CellCounts n = CountCells(a, b, cells);
  return double(n.both) * (x1 - x0) * (z1 - z0) / (double(cells) * cells);
}

std::string CliPath() { return MIXTEACH_CLI_PATH; }
fs::path FixtureDir() { return MIXTEACH_FIXTURE_DIR; }

int RunCommand(const std::string& command) {
  const int status = std::system(command.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : 128;
}

namespace {

// Non-comment, non-blank lines of a fixture, split at the first space.
std::vector<std::pair<std::string, std::string>> FixtureLines(const fs::path& path) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(ReadBytes(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto t = text::Trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto sp = t.find(' ');
    out.emplace_back(std::string(t.substr(0, sp)), sp == std::string_view::npos ? "" : std::string(t.substr(sp + 1)));
  }
  return out;
}

std::vector<std::string> Tokens(const std::string& s) {
  std::vector<std::string> out;
  for (auto t : text::SplitWhitespace(s)) out.emplace_back(t);
  return out;
}

double Number(const std::string& s) {
  const auto v = text::ParseDouble(s);
  if (!v) throw std::runtime_error("fixture: bad number " + s);
  return *v;
}

// Reads "<image> [cls reg]" into per-image lists, creating empty images up
// to the index.
void AddLoss(std::vector<std::vector<eval::PerBoxLoss>>& images, const std::string& rest) {
  const auto tok = Tokens(rest);
  const auto index = static_cast<std::size_t>(Number(tok.at(0)));
  if (images.size() <= index) images.resize(index + 1);
  if (tok.size() == 3) images[index].push_back({Number(tok[1]), Number(tok[2])});
}

}  // namespace

double ParseFraction(const std::string& token) {
  const auto slash = token.find('/');
  if (slash == std::string::npos) return Number(token);
  return Number(token.substr(0, slash)) / Number(token.substr(slash + 1));
}

ClusteringFixture LoadClusteringFixture(const fs::path& path) {
  ClusteringFixture f;
  for (const auto& [key, rest] : FixtureLines(path)) {
    if (key == "n_models") {
      f.n_models = static_cast<std::size_t>(Number(rest));
    } else if (key == "box") {
      const auto sp = rest.find(' ');
      f.boxes.push_back({static_cast<std::size_t>(Number(rest.substr(0, sp))),
                         kitti::ParseLabelLine(rest.substr(sp + 1))});
    } else if (key == "expect") {
      const auto tok = Tokens(rest);
      ClusteringFixture::Expected e;
      e.u = ParseFraction(tok.at(0));
      for (std::size_t i = 1; i < tok.size(); ++i) e.members.push_back(static_cast<std::size_t>(Number(tok[i])));
      f.clusters.push_back(e);
    } else {
      throw std::runtime_error("fixture: unknown key " + key);
    }
  }
  return f;
}

ApFixture LoadApFixture(const fs::path& path) {
  ApFixture f;
  for (const auto& [key, rest] : FixtureLines(path)) {
    if (key == "category") {
      f.cfg.category = rest;
    } else if (key == "iou") {
      f.cfg.iou_thr = Number(rest);
    } else if (key == "frame") {
      f.frames.emplace_back();
    } else if (key == "gt") {
      f.frames.back().gts.push_back(kitti::ParseLabelLine(rest));
    } else if (key == "pred") {
      f.frames.back().preds.push_back(kitti::ParseLabelLine(rest));
    } else if (key == "expect_ap") {
      f.expected_ap = ParseFraction(rest);
    } else {
      throw std::runtime_error("fixture: unknown key " + key);
    }
  }
  return f;
}

LossFixture LoadLossFixture(const fs::path& path) {
  LossFixture f;
  for (const auto& [key, rest] : FixtureLines(path)) {
    if (key == "lambda") {
      f.lambda = Number(rest);
    } else if (key == "S") {
      AddLoss(f.supervised, rest);
    } else if (key == "UL") {
      AddLoss(f.pseudo_on_labeled, rest);
    } else if (key == "UB") {
      AddLoss(f.pseudo_on_background, rest);
    } else if (key == "expect") {
      const auto tok = Tokens(rest);
      f.expected_supervised = ParseFraction(tok.at(0));
      f.expected_unsupervised = ParseFraction(tok.at(1));
      f.expected_total = ParseFraction(tok.at(2));
    } else {
      throw std::runtime_error("fixture: unknown key " + key);
    }
  }
  return f;
}

}  // namespace mixteach::testing
