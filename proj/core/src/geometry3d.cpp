#include "mixteach/geometry3d.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mixteach/errors.hpp"

namespace mixteach {

Category::Category(std::string name) : name_(std::move(name)) {
  if (name_ == "Car") {
    kind_ = ObjectClass::kCar;
  } else if (name_ == "Pedestrian") {
    kind_ = ObjectClass::kPedestrian;
  } else if (name_ == "Cyclist") {
    kind_ = ObjectClass::kCyclist;
  } else {
    kind_ = ObjectClass::kOther;
  }
}

double Rect::area() const noexcept {
  if (!IsValid()) return 0.0;
  return width() * height();
}

bool IsValidBox(const Box3D& box) {
  const auto& d = box.dimensions;
  const auto& loc = box.location;
  const bool finite = std::isfinite(d.h) && std::isfinite(d.w) && std::isfinite(d.l) &&
                      std::isfinite(loc.x) && std::isfinite(loc.y) && std::isfinite(loc.z) &&
                      std::isfinite(box.rotation_y);
  if (!finite || !(d.h > 0.0 && d.w > 0.0 && d.l > 0.0)) return false;
  if (box.score && !(*box.score >= 0.0 && *box.score <= 1.0)) return false;
  return true;
}

bool CameraProjection::IsValid() const {
  for (double v : p) {
    if (!std::isfinite(v)) return false;
  }
  return at(0, 0) > 0.0 && at(1, 1) > 0.0;
}

bool CameraProjection::ApproxEqual(const CameraProjection& other, double tol) const {
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (std::abs(p[i] - other.p[i]) > tol) return false;
  }
  return true;
}

namespace geometry {
namespace {

constexpr double kMergeTol = 1e-9;

double Cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.z - o.z) - (a.z - o.z) * (b.x - o.x);
}

double SignedArea(const std::vector<Point2>& v) {
  double twice = 0.0;
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = v[i];
    const Point2& b = v[(i + 1) % n];
    twice += a.x * b.z - b.x * a.z;
  }
  return 0.5 * twice;
}

std::vector<Point2> CounterClockwise(std::vector<Point2> v) {
  if (SignedArea(v) < 0.0) std::reverse(v.begin(), v.end());
  return v;
}

bool Near(const Point2& a, const Point2& b) {
  return std::abs(a.x - b.x) <= kMergeTol && std::abs(a.z - b.z) <= kMergeTol;
}

std::vector<Point2> Dedup(const std::vector<Point2>& in) {
  std::vector<Point2> out;
  out.reserve(in.size());
  for (const Point2& p : in) {
    if (out.empty() || !Near(out.back(), p)) out.push_back(p);
  }
  while (out.size() > 1 && Near(out.front(), out.back())) out.pop_back();
  return out;
}

}  // namespace

std::array<Vec3, 8> BoxCorners(const Box3D& box) {
  const double l = box.dimensions.l;
  const double w = box.dimensions.w;
  const double h = box.dimensions.h;
  const std::array<double, 8> xs{l / 2, l / 2, -l / 2, -l / 2, l / 2, l / 2, -l / 2, -l / 2};
  const std::array<double, 8> ys{0, 0, 0, 0, -h, -h, -h, -h};
  const std::array<double, 8> zs{w / 2, -w / 2, -w / 2, w / 2, w / 2, -w / 2, -w / 2, w / 2};
  const double c = std::cos(box.rotation_y);
  const double s = std::sin(box.rotation_y);

  std::array<Vec3, 8> corners;
  for (std::size_t i = 0; i < 8; ++i) {
    corners[i].x = c * xs[i] + s * zs[i] + box.location.x;
    corners[i].y = ys[i] + box.location.y;
    corners[i].z = -s * xs[i] + c * zs[i] + box.location.z;
  }
  return corners;
}

BevPolygon BevFootprint(const Box3D& box) {
  const auto corners = BoxCorners(box);
  std::vector<Point2> v;
  v.reserve(4);
  for (std::size_t i = 0; i < 4; ++i) v.push_back({corners[i].x, corners[i].z});
  return BevPolygon{CounterClockwise(std::move(v))};
}

double PolygonArea(const BevPolygon& polygon) {
  if (polygon.vertices.size() < 3) return 0.0;
  return std::abs(SignedArea(polygon.vertices));
}

BevPolygon ClipConvex(const BevPolygon& subject, const BevPolygon& clip) {
  if (subject.vertices.size() < 3 || clip.vertices.size() < 3) return {};
  const std::vector<Point2> window = CounterClockwise(clip.vertices);
  std::vector<Point2> output = CounterClockwise(subject.vertices);

  const std::size_t m = window.size();
  for (std::size_t e = 0; e < m && !output.empty(); ++e) {
    const Point2& a = window[e];
    const Point2& b = window[(e + 1) % m];
    std::vector<Point2> input;
    input.swap(output);

    const std::size_t n = input.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2& cur = input[i];
      const Point2& prev = input[(i + n - 1) % n];
      const double d_cur = Cross(a, b, cur);
      const double d_prev = Cross(a, b, prev);
      const bool cur_in = d_cur >= 0.0;
      const bool prev_in = d_prev >= 0.0;
      if (cur_in != prev_in) {
        const double t = d_prev / (d_prev - d_cur);
        output.push_back({prev.x + t * (cur.x - prev.x), prev.z + t * (cur.z - prev.z)});
      }
      if (cur_in) output.push_back(cur);
    }
    output = Dedup(output);
  }
  if (output.size() < 3) return {};
  return BevPolygon{std::move(output)};
}

double PolygonIntersectionArea(const BevPolygon& p, const BevPolygon& q) {
  return PolygonArea(ClipConvex(p, q));
}

double BoxVolume(const Box3D& box) {
  return box.dimensions.h * box.dimensions.w * box.dimensions.l;
}

double VerticalOverlap(const Box3D& a, const Box3D& b) {
  const double bottom = std::min(a.location.y, b.location.y);
  const double top = std::max(a.location.y - a.dimensions.h, b.location.y - b.dimensions.h);
  return std::max(0.0, bottom - top);
}

double Iou3d(const Box3D& a, const Box3D& b) {
  const double dy = VerticalOverlap(a, b);
  if (dy <= 0.0) return 0.0;
  const double area = PolygonIntersectionArea(BevFootprint(a), BevFootprint(b));
  if (area <= 0.0) return 0.0;
  const double inter = area * dy;
  const double uni = BoxVolume(a) + BoxVolume(b) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double IouBev(const Box3D& a, const Box3D& b) {
  const BevPolygon pa = BevFootprint(a);
  const BevPolygon pb = BevFootprint(b);
  const double inter = PolygonIntersectionArea(pa, pb);
  if (inter <= 0.0) return 0.0;
  const double uni = PolygonArea(pa) + PolygonArea(pb) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double Iou2d(const Rect& a, const Rect& b) {
  const double iw = std::min(a.right, b.right) - std::max(a.left, b.left);
  const double ih = std::min(a.bottom, b.bottom) - std::max(a.top, b.top);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

Rect ProjectToImage(const Box3D& box, const CameraProjection& cam) {
  Rect r{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
         -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Vec3& c : BoxCorners(box)) {
    const double u = cam.at(0, 0) * c.x + cam.at(0, 1) * c.y + cam.at(0, 2) * c.z + cam.at(0, 3);
    const double v = cam.at(1, 0) * c.x + cam.at(1, 1) * c.y + cam.at(1, 2) * c.z + cam.at(1, 3);
    const double d = cam.at(2, 0) * c.x + cam.at(2, 1) * c.y + cam.at(2, 2) * c.z + cam.at(2, 3);
    if (!(d > 0.0)) {
      throw Error(ErrorCode::kBehindCamera, "box corner projects with non-positive depth");
    }
    r.left = std::min(r.left, u / d);
    r.right = std::max(r.right, u / d);
    r.top = std::min(r.top, v / d);
    r.bottom = std::max(r.bottom, v / d);
  }
  return r;
}

}  // namespace geometry
}  // namespace mixteach
