#pragma once

#include <array>
#include <cmath>
#include <optional>

namespace lift3d {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

using Point3 = Vec3;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }
inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

// Row-major 3x3 matrix. Only what the pose math needs.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  double operator()(int r, int c) const { return m[3 * r + c]; }
  double& operator()(int r, int c) { return m[3 * r + c]; }

  static Mat3 identity() { return Mat3{}; }
  Mat3 transpose() const;
  double det() const;
};

Mat3 operator*(const Mat3& a, const Mat3& b);
Vec3 operator*(const Mat3& a, const Vec3& v);
Mat3 operator*(double s, const Mat3& a);

// Elementary right-handed rotations (angle in radians) and their
// derivatives with respect to the angle.
Mat3 rotation_x(double rad);
Mat3 rotation_y(double rad);
Mat3 rotation_z(double rad);
Mat3 rotation_x_derivative(double rad);
Mat3 rotation_y_derivative(double rad);
Mat3 rotation_z_derivative(double rad);

inline constexpr double kPi = 3.14159265358979323846;
inline double deg2rad(double d) { return d * (kPi / 180.0); }
inline double rad2deg(double r) { return r * (180.0 / kPi); }

// Wraps an angle into [0, 360).
double normalize_angle(double deg);
// Wraps an angle into [-180, 180).
double normalize_angle_signed(double deg);

// Camera pose facing the world origin. Angles in degrees, distance in world
// units, (tx, ty) the principal-point translation in pixels, focal in pixels.
//
// Convention (documented in README): world Z is up; at the zero pose the
// camera sits on the -Y axis looking along +Y. Azimuth pans counterclockwise
// about world Z (viewed from +Z), elevation lifts the camera above the ground
// plane, theta rolls about the optical axis (positive theta turns image
// content clockwise in pixel coordinates).
struct CameraPose {
  double azimuth = 0.0;    // [0, 360)
  double elevation = 0.0;  // [-90, 90)
  double theta = 0.0;      // [-180, 180)
  double distance = 1.0;   // > 0
  double tx = 0.0;
  double ty = 0.0;
  double focal = 3000.0;
};

// Wraps azimuth/theta into their canonical intervals; distance/focal untouched.
CameraPose normalized(const CameraPose& pose);
bool pose_valid(const CameraPose& pose);

// Viewing rotation R = R_roll(theta) * R_tilt(elevation) * R_pan(azimuth),
// with R_pan(a) = Rz(-a), R_tilt(e) = Rx(e), R_roll(t) = Ry(t) (radians
// internally). Identity at the zero pose.
Mat3 rotation_from_pose(const CameraPose& pose);

// Fixed world-to-camera axis change applied after the viewing rotation:
// camera x = world x, camera y = -world z (image y grows downward),
// camera z = world y (optical axis). Equals Rx(+90 deg).
Mat3 camera_axis_convention();

// Point in the camera frame: B * R * X + (0, 0, distance).
Vec3 camera_frame_point(const CameraPose& pose, const Point3& X);

// Camera center in world coordinates (the point with zero camera-frame coords).
Vec3 camera_center(const CameraPose& pose);

inline constexpr double kDepthEpsilon = 1e-6;

// Perspective projection u = focal*x/z + tx, v = focal*y/z + ty.
// Returns nullopt when the point is at or behind the camera plane
// (z <= kDepthEpsilon); callers treat that as a degenerate pose.
std::optional<Point2> project(const CameraPose& pose, const Point3& X);

// Smallest absolute difference between two azimuths, in [0, 180].
double azimuth_error(double a1_deg, double a2_deg);

struct BBox {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
  Point2 center() const { return {0.5 * (xmin + xmax), 0.5 * (ymin + ymax)}; }
  bool valid() const { return xmax > xmin && ymax > ymin; }
  bool contains(const Point2& p) const {
    return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
  }
};

// Intersection over union; 0 for disjoint or degenerate boxes.
double iou(const BBox& a, const BBox& b);

}  // namespace lift3d
