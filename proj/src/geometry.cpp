#include "bevloc/geometry.hpp"

namespace bevloc {

double normalize_angle(double a) {
  // remainder() lands in [-pi, pi]; fold the -pi endpoint onto +pi so the
  // result is half-open at +pi.
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

double angle_diff(double a, double b) { return normalize_angle(a - b); }

Pose2 compose(const Pose2& a, const Pose2& b) {
  const Vec2 t = a.rotation() * b.translation() + a.translation();
  return Pose2(t.x(), t.y(), a.yaw + b.yaw);
}

Pose2 invert(const Pose2& a) {
  const double c = std::cos(a.yaw), s = std::sin(a.yaw);
  // R(-yaw) * (-t)
  const double ix = -(c * a.x + s * a.y);
  const double iy = -(-s * a.x + c * a.y);
  return Pose2(ix, iy, -a.yaw);
}

Vec2 local_to_global(const Pose2& pose, const Vec2& p_local) {
  return pose.rotation() * p_local + pose.translation();
}

Vec2 global_to_local(const Pose2& pose, const Vec2& p_global) {
  return pose.rotation().transpose() * (p_global - pose.translation());
}

Similarity2 compose(const Similarity2& a, const Similarity2& b) {
  Similarity2 out;
  out.scale = a.scale * b.scale;
  out.rotation = normalize_angle(a.rotation + b.rotation);
  out.translation = a.linear() * b.translation + a.translation;
  return out;
}

Similarity2 invert(const Similarity2& a) {
  Similarity2 out;
  out.scale = 1.0 / a.scale;
  out.rotation = normalize_angle(-a.rotation);
  out.translation = -(out.linear() * a.translation);
  return out;
}

}  // namespace bevloc
