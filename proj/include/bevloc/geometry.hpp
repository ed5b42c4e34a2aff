#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

namespace bevloc {

inline constexpr double kPi = 3.14159265358979323846;

using Vec2 = Eigen::Vector2d;

/// Wrap an angle to (-pi, pi] (half-open at +pi).
double normalize_angle(double a);

/// Wrapped difference a - b, in (-pi, pi].
double angle_diff(double a, double b);

inline double deg_to_rad(double d) { return d * kPi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / kPi; }

/// Raw 3D sensor point in the local (sensor) frame, meters.
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

using PointCloud = std::vector<Point3>;

/// Planar rigid pose: a point p_local maps to R(yaw) * p_local + (x, y).
/// yaw is kept normalized to (-pi, pi].
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  Pose2() = default;
  Pose2(double x_, double y_, double yaw_) : x(x_), y(y_), yaw(normalize_angle(yaw_)) {}

  static Pose2 identity() { return Pose2(); }

  Eigen::Matrix2d rotation() const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    Eigen::Matrix2d r;
    r << c, -s, s, c;
    return r;
  }
  Vec2 translation() const { return Vec2(x, y); }
};

Pose2 compose(const Pose2& a, const Pose2& b);
Pose2 invert(const Pose2& a);

Vec2 local_to_global(const Pose2& pose, const Vec2& p_local);
Vec2 global_to_local(const Pose2& pose, const Vec2& p_global);

/// Planar similarity transform: p -> scale * R(rotation) * p + translation.
/// scale must stay positive.
struct Similarity2 {
  double rotation = 0.0;
  Vec2 translation = Vec2::Zero();
  double scale = 1.0;

  Similarity2() = default;
  Similarity2(double rotation_, const Vec2& translation_, double scale_)
      : rotation(rotation_), translation(translation_), scale(scale_) {}

  static Similarity2 identity() { return Similarity2(); }
  static Similarity2 translate(const Vec2& t) { return Similarity2(0.0, t, 1.0); }

  Eigen::Matrix2d linear() const {
    const double c = std::cos(rotation), s = std::sin(rotation);
    Eigen::Matrix2d m;
    m << c, -s, s, c;
    return m * scale;
  }
  Vec2 apply(const Vec2& p) const { return linear() * p + translation; }
};

/// compose(a, b).apply(p) == a.apply(b.apply(p))
Similarity2 compose(const Similarity2& a, const Similarity2& b);
Similarity2 invert(const Similarity2& a);

}  // namespace bevloc
