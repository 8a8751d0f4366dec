#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "mixteach/errors.hpp"
#include "mixteach/kitti_io.hpp"
#include "mixteach/rng.hpp"
#include "mixteach/text_format.hpp"

namespace mixteach::synth {
namespace fs = std::filesystem;
namespace {

constexpr double kGroundY = 1.65;

std::string FrameId(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

// Round-trips through the label text format so that in-memory boxes equal
// what a reader gets back from disk.
Box3D Quantize(const Box3D& b) { return kitti::ParseLabelLine(kitti::FormatLabelLine(b)); }

std::optional<Rect> ClippedRect(const Box3D& b, const CameraProjection& cam, int w, int h, double* visible) {
  Rect r;
  try {
    r = geometry::ProjectToImage(b, cam);
  } catch (const Error&) {
    return std::nullopt;
  }
  Rect c{std::max(r.left, 0.0), std::max(r.top, 0.0), std::min(r.right, double(w - 1)),
         std::min(r.bottom, double(h - 1))};
  if (!c.IsValid() || !r.IsValid()) return std::nullopt;
  if (visible != nullptr) *visible = c.area() / r.area();
  return c;
}

Dimensions SampleDims(Rng& rng, const std::string& cat) {
  auto j = [&](double mean, double sd) { return std::max(0.3, mean + rng.Normal(0.0, sd)); };
  if (cat == "Car") return {j(1.52, 0.08), j(1.63, 0.08), j(3.88, 0.25)};
  if (cat == "Pedestrian") return {j(1.76, 0.1), j(0.66, 0.06), j(0.84, 0.1)};
  return {j(1.74, 0.08), j(0.6, 0.06), j(1.76, 0.12)};
}

std::string SampleCategory(Rng& rng) {
  const double u = rng.Uniform();
  return u < 0.6 ? "Car" : (u < 0.8 ? "Pedestrian" : "Cyclist");
}

double WrapAngle(double a) {
  while (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
  while (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

void SetAlpha(Box3D& b) { b.alpha = WrapAngle(b.rotation_y - std::atan2(b.location.x, b.location.z)); }

// Fills bbox2d from the projection; false when the box is not usefully visible.
bool FinishBox(Box3D& b, const Scene& s, double min_visible) {
  double visible = 0.0;
  const auto rect = ClippedRect(b, s.calib, s.config.image_width, s.config.image_height, &visible);
  if (!rect || visible < min_visible || rect->height() < 8.0) return false;
  b.bbox2d = *rect;
  b.truncated = std::clamp(1.0 - visible, 0.0, 1.0);
  SetAlpha(b);
  return true;
}

Box3D RandomBox(Rng& rng, const std::string& cat) {
  Box3D b;
  b.category = Category(cat);
  b.dimensions = SampleDims(rng, cat);
  b.location.z = rng.UniformReal(6.0, 40.0);
  const double half = std::min(12.0, 0.42 * b.location.z);
  b.location.x = rng.UniformReal(-half, half);
  b.location.y = kGroundY + rng.Normal(0.0, 0.03);
  b.rotation_y = rng.UniformReal(-std::numbers::pi, std::numbers::pi);
  return b;
}

bool Clear(const Box3D& b, const std::vector<SynthObject>& placed) {
  for (const auto& o : placed) {
    const double dx = b.location.x - o.box.location.x;
    const double dz = b.location.z - o.box.location.z;
    const double reach = 0.5 * (b.dimensions.l + o.box.dimensions.l) + 0.5;
    if (dx * dx + dz * dz < reach * reach) return false;
  }
  return true;
}

int OcclusionLevel(const Box3D& b, const std::vector<SynthObject>& objects) {
  double covered = 0.0;
  for (const auto& o : objects) {
    if (o.box.location.z >= b.location.z) continue;
    const Rect& a = b.bbox2d;
    const Rect& c = o.box.bbox2d;
    const double iw = std::min(a.right, c.right) - std::max(a.left, c.left);
    const double ih = std::min(a.bottom, c.bottom) - std::max(a.top, c.top);
    if (iw > 0 && ih > 0) covered += iw * ih;
  }
  const double f = std::min(1.0, covered / b.bbox2d.area());
  return f < 0.1 ? 0 : (f < 0.4 ? 1 : 2);
}

std::vector<Box3D> Predict(Rng& rng, const Scene& s, const SynthFrame& f) {
  std::vector<Box3D> out;
  for (const auto& o : f.objects) {
    const double d = o.difficulty;
    if (!rng.Bernoulli(0.97 - 0.55 * d)) continue;
    Box3D b = o.box;
    // Scaled by footprint size so small classes are not hopeless.
    const double size = std::sqrt(o.box.dimensions.w * o.box.dimensions.l) / 2.5;
    const double sigma = size * (0.03 + 0.6 * d * d);
    b.location.x += rng.Normal(0.0, sigma);
    b.location.z += rng.Normal(0.0, 1.3 * sigma);
    b.location.y += rng.Normal(0.0, 0.03 + 0.1 * d);
    const double ds = 0.015 + 0.06 * d;
    b.dimensions.h *= std::max(0.5, 1.0 + rng.Normal(0.0, ds));
    b.dimensions.w *= std::max(0.5, 1.0 + rng.Normal(0.0, ds));
    b.dimensions.l *= std::max(0.5, 1.0 + rng.Normal(0.0, ds));
    b.rotation_y = WrapAngle(b.rotation_y + rng.Normal(0.0, 0.03 + 0.3 * d));
    b.occluded = 0;
    b.score = std::clamp(0.88 - 0.2 * d + rng.Normal(0.0, 0.12), 0.05, 0.99);
    if (FinishBox(b, s, 0.2)) out.push_back(Quantize(b));
  }
  if (!f.objects.empty()) {
    const double rate = s.config.false_positives_per_frame;
    int n = static_cast<int>(rate);
    if (rng.Bernoulli(rate - n)) ++n;
    for (int i = 0; i < n; ++i) {
      Box3D b = RandomBox(rng, SampleCategory(rng));
      b.score = rng.UniformReal(0.3, 0.95);
      if (FinishBox(b, s, 0.2)) out.push_back(Quantize(b));
    }
  }
  return out;
}

void PutPixel(Image& img, int x, int y, Rgb c) {
  if (x >= 0 && y >= 0 && x < img.width() && y < img.height()) img.set(x, y, c);
}

std::uint8_t Clamp8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

CameraProjection ScaledKittiP2(int image_width) {
  const double s = image_width / 1242.0;
  CameraProjection p;
  p.p = {7.215377e+02 * s, 0.0, 6.095593e+02 * s, 4.485728e+01 * s,
         0.0, 7.215377e+02 * s, 1.728540e+02 * s, 2.163791e-01 * s,
         0.0, 0.0, 1.0, 2.745884e-03};
  return p;
}

Scene GenerateScene(const SceneConfig& cfg) {
  if (cfg.n_models == 0) throw Error(ErrorCode::kInvalidArgument, "synthetic scene needs at least one model");
  Scene s;
  s.config = cfg;
  s.calib = ScaledKittiP2(cfg.image_width);
  const std::size_t n = cfg.n_labeled + cfg.n_unlabeled;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(DeriveSeed(cfg.seed, i));
    SynthFrame f;
    f.frame_id = FrameId(i);
    f.labeled = i < cfg.n_labeled;
    const bool empty = !f.labeled && rng.Bernoulli(cfg.empty_fraction);
    const int target = empty ? 0 : static_cast<int>(rng.UniformInt(1, cfg.max_objects));
    for (int tries = 0; static_cast<int>(f.objects.size()) < target && tries < 60; ++tries) {
      Box3D b = RandomBox(rng, SampleCategory(rng));
      if (!Clear(b, f.objects) || !FinishBox(b, s, 0.5)) continue;
      f.objects.push_back({Quantize(b), 0.0});
    }
    for (auto& o : f.objects) {
      o.box.occluded = OcclusionLevel(o.box, f.objects);
      o.box = Quantize(o.box);
      const double depth = (o.box.location.z - 6.0) / 34.0;
      o.difficulty = std::clamp(0.55 * depth + 0.35 * rng.Uniform() + 0.15 * o.box.occluded, 0.0, 1.0);
    }
    if (!f.labeled) {
      for (std::size_t m = 0; m < cfg.n_models; ++m) {
        Rng model_rng(DeriveSeed(DeriveSeed(cfg.seed, i), 1000 + m));
        f.predictions.push_back(Predict(model_rng, s, f));
      }
    }
    s.frames.push_back(std::move(f));
  }
  return s;
}

std::vector<Box3D> GroundTruth(const SynthFrame& frame) {
  std::vector<Box3D> out;
  for (const auto& o : frame.objects) out.push_back(o.box);
  return out;
}

Image RenderFrame(const Scene& scene, const SynthFrame& frame) {
  const int w = scene.config.image_width;
  const int h = scene.config.image_height;
  Image img(w, h);
  Rng rng(DeriveSeed(scene.config.seed ^ 0x5eedULL, std::stoull(frame.frame_id)));
  const int horizon = static_cast<int>(0.45 * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double n = 12.0 * (rng.Uniform() - 0.5);
      if (y < horizon) {
        img.set(x, y, {Clamp8(150 + 60.0 * y / horizon + n), Clamp8(180 + 40.0 * y / horizon + n), Clamp8(230 + n)});
      } else {
        const double t = double(y - horizon) / (h - horizon);
        img.set(x, y, {Clamp8(90 + 40 * t + n), Clamp8(90 + 40 * t + n), Clamp8(95 + 40 * t + n)});
      }
    }
  }
  std::vector<const SynthObject*> order;
  for (const auto& o : frame.objects) order.push_back(&o);
  std::sort(order.begin(), order.end(),
            [](const SynthObject* a, const SynthObject* b) { return a->box.location.z > b->box.location.z; });
  for (const SynthObject* o : order) {
    const Rect& r = o->box.bbox2d;
    Rgb base = o->box.category.name() == "Car" ? Rgb{170, 40, 40}
               : o->box.category.name() == "Pedestrian" ? Rgb{40, 140, 60}
                                                      : Rgb{50, 60, 170};
    const int x0 = static_cast<int>(std::floor(r.left));
    const int x1 = static_cast<int>(std::ceil(r.right));
    const int y0 = static_cast<int>(std::floor(r.top));
    const int y1 = static_cast<int>(std::ceil(r.bottom));
    for (int y = y0; y < y1; ++y) {
      const double shade = 0.7 + 0.3 * double(y - y0) / std::max(1, y1 - y0);
      for (int x = x0; x < x1; ++x) {
        const bool stripe = ((x - x0) / 4 + (y - y0) / 4) % 2 == 0;
        const double k = shade * (stripe ? 1.0 : 0.85);
        PutPixel(img, x, y, {Clamp8(base.r * k), Clamp8(base.g * k), Clamp8(base.b * k)});
      }
    }
  }
  return img;
}

void WriteScene(const Scene& scene, const fs::path& root) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "calib");
  fs::create_directories(root / "labeled");
  fs::create_directories(root / "gt");
  for (std::size_t m = 0; m < scene.config.n_models; ++m) {
    fs::create_directories(root / "predictions" / ("model_" + std::to_string(m)));
  }
  std::string p2 = "P2:";
  for (double v : scene.calib.p) p2 += ' ' + text::FormatExact(v);
  const std::string calib_text = p2 + "\n";
  for (const auto& f : scene.frames) {
    WritePng(RenderFrame(scene, f), root / "images" / (f.frame_id + ".png"));
    kitti::WriteTextFile(root / "calib" / (f.frame_id + ".txt"), calib_text);
    kitti::WriteLabelFile(GroundTruth(f), root / (f.labeled ? "labeled" : "gt") / (f.frame_id + ".txt"));
    for (std::size_t m = 0; m < f.predictions.size(); ++m) {
      kitti::WriteLabelFile(f.predictions[m],
                            root / "predictions" / ("model_" + std::to_string(m)) / (f.frame_id + ".txt"));
    }
  }
  std::string dirs;
  for (std::size_t m = 0; m < scene.config.n_models; ++m) {
    dirs += (m ? "," : "") + std::string("predictions/model_") + std::to_string(m);
  }
  kitti::WriteTextFile(root / "pipeline.ini",
                       "[dataset]\n"
                       "labeled_dir = labeled\n"
                       "image_dir = images\n"
                       "calib_dir = calib\n"
                       "gt_dir = gt\n"
                       "\n[ensemble]\n"
                       "prediction_dirs = " + dirs + "\n"
                       "\n[pipeline]\n"
                       "output_root = out\n"
                       "master_seed = " + std::to_string(scene.config.seed) + "\n");
}

}  // namespace mixteach::synth
