#include "lift3d/geometry.hpp"

namespace lift3d {

Mat3 Mat3::transpose() const {
  Mat3 t;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) t(r, c) = (*this)(c, r);
  return t;
}

double Mat3::det() const {
  const auto& a = *this;
  return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
         a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
         a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

Mat3 operator*(const Mat3& a, const Mat3& b) {
  Mat3 out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a(r, k) * b(k, c);
      out(r, c) = s;
    }
  return out;
}

Vec3 operator*(const Mat3& a, const Vec3& v) {
  return {a(0, 0) * v.x + a(0, 1) * v.y + a(0, 2) * v.z,
          a(1, 0) * v.x + a(1, 1) * v.y + a(1, 2) * v.z,
          a(2, 0) * v.x + a(2, 1) * v.y + a(2, 2) * v.z};
}

Mat3 operator*(double s, const Mat3& a) {
  Mat3 out = a;
  for (double& v : out.m) v *= s;
  return out;
}

Mat3 rotation_x(double rad) {
  const double c = std::cos(rad), s = std::sin(rad);
  Mat3 r;
  r.m = {1, 0, 0, 0, c, -s, 0, s, c};
  return r;
}

Mat3 rotation_y(double rad) {
  const double c = std::cos(rad), s = std::sin(rad);
  Mat3 r;
  r.m = {c, 0, s, 0, 1, 0, -s, 0, c};
  return r;
}

Mat3 rotation_z(double rad) {
  const double c = std::cos(rad), s = std::sin(rad);
  Mat3 r;
  r.m = {c, -s, 0, s, c, 0, 0, 0, 1};
  return r;
}

Mat3 rotation_x_derivative(double rad) {
  const double c = std::cos(rad), s = std::sin(rad);
  Mat3 r;
  r.m = {0, 0, 0, 0, -s, -c, 0, c, -s};
  return r;
}

Mat3 rotation_y_derivative(double rad) {
  const double c = std::cos(rad), s = std::sin(rad);
  Mat3 r;
  r.m = {-s, 0, c, 0, 0, 0, -c, 0, -s};
  return r;
}

Mat3 rotation_z_derivative(double rad) {
  const double c = std::cos(rad), s = std::sin(rad);
  Mat3 r;
  r.m = {-s, -c, 0, c, -s, 0, 0, 0, 0};
  return r;
}

double normalize_angle(double deg) {
  double a = std::fmod(deg, 360.0);
  if (a < 0.0) a += 360.0;
  if (a >= 360.0) a = 0.0;  // fmod can return 360 - eps rounded up
  return a;
}

double normalize_angle_signed(double deg) {
  double a = normalize_angle(deg);
  if (a >= 180.0) a -= 360.0;
  return a;
}

CameraPose normalized(const CameraPose& pose) {
  CameraPose p = pose;
  p.azimuth = normalize_angle(p.azimuth);
  p.theta = normalize_angle_signed(p.theta);
  return p;
}

bool pose_valid(const CameraPose& pose) {
  return pose.distance > 0.0 && pose.focal > 0.0 && pose.elevation >= -90.0 &&
         pose.elevation < 90.0 && std::isfinite(pose.azimuth) &&
         std::isfinite(pose.theta) && std::isfinite(pose.tx) && std::isfinite(pose.ty);
}

Mat3 rotation_from_pose(const CameraPose& pose) {
  return rotation_y(deg2rad(pose.theta)) * rotation_x(deg2rad(pose.elevation)) *
         rotation_z(-deg2rad(pose.azimuth));
}

Mat3 camera_axis_convention() { return rotation_x(kPi / 2.0); }

Vec3 camera_frame_point(const CameraPose& pose, const Point3& X) {
  Vec3 p = camera_axis_convention() * (rotation_from_pose(pose) * X);
  p.z += pose.distance;
  return p;
}

Vec3 camera_center(const CameraPose& pose) {
  // Solve B*R*C + (0,0,D) = 0  =>  C = -R^T * B^T * (0,0,D).
  Mat3 rt = rotation_from_pose(pose).transpose();
  Mat3 bt = camera_axis_convention().transpose();
  return rt * (bt * Vec3{0.0, 0.0, -pose.distance});
}

std::optional<Point2> project(const CameraPose& pose, const Point3& X) {
  const Vec3 p = camera_frame_point(pose, X);
  if (p.z <= kDepthEpsilon) return std::nullopt;
  return Point2{pose.focal * p.x / p.z + pose.tx, pose.focal * p.y / p.z + pose.ty};
}

double azimuth_error(double a1_deg, double a2_deg) {
  double d = std::fabs(normalize_angle(a1_deg) - normalize_angle(a2_deg));
  return std::min(d, 360.0 - d);
}

double iou(const BBox& a, const BBox& b) {
  if (!a.valid() || !b.valid()) return 0.0;
  const double ix = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double iy = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

}  // namespace lift3d
