#pragma once

// Geometric kernels for KITTI-convention 3D boxes: corners, bird's-eye-view
// footprint intersection, volumetric / BEV IoU, 2D IoU and pinhole projection.
//
// Camera frame: x right, y down, z forward. A box's location is the centre of
// its bottom face; rotation_y turns the box about the camera y axis.
//
// All functions are pure and thread-safe.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mixteach {

enum class ObjectClass { kCar, kPedestrian, kCyclist, kOther };

// Object category. Known KITTI classes get an enum tag; anything else
// (including "DontCare", "Van", "Misc") is carried verbatim as kOther.
class Category {
 public:
  Category() = default;
  explicit Category(std::string name);

  static Category Car() { return Category("Car"); }
  static Category Pedestrian() { return Category("Pedestrian"); }
  static Category Cyclist() { return Category("Cyclist"); }

  ObjectClass kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }
  bool IsDontCare() const noexcept { return name_ == "DontCare"; }

  friend bool operator==(const Category& a, const Category& b) { return a.name_ == b.name_; }

 private:
  std::string name_ = "Car";
  ObjectClass kind_ = ObjectClass::kCar;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

struct Dimensions {
  double h = 0.0;
  double w = 0.0;
  double l = 0.0;
  friend bool operator==(const Dimensions&, const Dimensions&) = default;
};

// Axis-aligned image rectangle in pixels: (left, top, right, bottom).
struct Rect {
  double left = 0.0;
  double top = 0.0;
  double right = 0.0;
  double bottom = 0.0;

  double width() const noexcept { return right - left; }
  double height() const noexcept { return bottom - top; }
  double area() const noexcept;
  bool IsValid() const noexcept { return left < right && top < bottom; }
  friend bool operator==(const Rect&, const Rect&) = default;
};

// One 3D object label or detection.
struct Box3D {
  Category category;
  double truncated = 0.0;
  int occluded = 0;
  double alpha = 0.0;
  Rect bbox2d;
  Dimensions dimensions;
  Vec3 location;
  double rotation_y = 0.0;
  std::optional<double> score;  // absent for human labels

  friend bool operator==(const Box3D&, const Box3D&) = default;
};

// Positive dimensions, finite values, score in [0,1] when present. DontCare
// rows (dimensions -1) do not satisfy this and are never fed to the kernels.
bool IsValidBox(const Box3D& box);

struct Point2 {
  double x = 0.0;
  double z = 0.0;
};

// Convex polygon in the ground (x, z) plane with counter-clockwise vertices,
// where counter-clockwise means positive shoelace area with x as abscissa and
// z as ordinate.
struct BevPolygon {
  std::vector<Point2> vertices;
};

// KITTI P2: 3x4 row-major projection matrix.
struct CameraProjection {
  std::array<double, 12> p{};

  double at(int row, int col) const { return p[static_cast<std::size_t>(row * 4 + col)]; }
  bool IsValid() const;
  // Every entry within `tol` of the other's.
  bool ApproxEqual(const CameraProjection& other, double tol) const;
  friend bool operator==(const CameraProjection&, const CameraProjection&) = default;
};

namespace geometry {

// 8 corners: indices 0..3 on the bottom face (y = location.y), 4..7 on the
// top face (y = location.y - h), both faces ordered around the footprint.
std::array<Vec3, 8> BoxCorners(const Box3D& box);

// Footprint of the box in the (x, z) plane, counter-clockwise.
BevPolygon BevFootprint(const Box3D& box);

double PolygonArea(const BevPolygon& polygon);

// Clips `subject` against the convex polygon `clip`. Vertices closer than
// 1e-9 are merged. Either input may be given in either orientation.
BevPolygon ClipConvex(const BevPolygon& subject, const BevPolygon& clip);

// Area of p ∩ q for convex polygons. Shared edges and single contact points
// give 0.
double PolygonIntersectionArea(const BevPolygon& p, const BevPolygon& q);

double BoxVolume(const Box3D& box);

// Overlap of the vertical extents [y - h, y].
double VerticalOverlap(const Box3D& a, const Box3D& b);

// Volumetric IoU of two rotated boxes.
double Iou3d(const Box3D& a, const Box3D& b);

// Footprint IoU (BEV intersection over BEV union).
double IouBev(const Box3D& a, const Box3D& b);

double Iou2d(const Rect& a, const Rect& b);

// Axis-aligned bounding rect of the 8 projected corners. Throws
// Error(kBehindCamera) when any corner has non-positive projected depth.
Rect ProjectToImage(const Box3D& box, const CameraProjection& cam);

}  // namespace geometry
}  // namespace mixteach
