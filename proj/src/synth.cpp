#include "bevloc/synth.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "bevloc/rng.hpp"

namespace bevloc {

namespace {

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Intersection of two closed segments, endpoint contacts included.
bool segment_intersection(const Segment& s1, const Segment& s2, Vec2* out) {
  const Vec2 d1 = s1.b - s1.a;
  const Vec2 d2 = s2.b - s2.a;
  const double denom = cross2(d1, d2);
  if (std::abs(denom) < 1e-12) return false;  // parallel or degenerate
  const Vec2 r = s2.a - s1.a;
  const double t = cross2(r, d2) / denom;
  const double u = cross2(r, d1) / denom;
  const double eps = 1e-9;
  if (t < -eps || t > 1.0 + eps || u < -eps || u > 1.0 + eps) return false;
  *out = s1.a + t * d1;
  return true;
}

double point_segment_distance(const Vec2& p, const Segment& s) {
  const Vec2 d = s.b - s.a;
  const double len_sq = d.squaredNorm();
  if (len_sq < 1e-18) return (p - s.a).norm();
  const double t = std::clamp((p - s.a).dot(d) / len_sq, 0.0, 1.0);
  return (p - (s.a + t * d)).norm();
}

// Nearest positive ray parameter against a segment, or +inf.
double ray_segment(const Vec2& o, const Vec2& dir, const Segment& s) {
  const Vec2 e = s.b - s.a;
  const double denom = cross2(dir, e);
  if (std::abs(denom) < 1e-15) return std::numeric_limits<double>::infinity();
  const Vec2 r = s.a - o;
  const double t = cross2(r, e) / denom;
  const double u = cross2(r, dir) / denom;
  if (t <= 1e-9 || u < 0.0 || u > 1.0) return std::numeric_limits<double>::infinity();
  return t;
}

// Nearest positive ray parameter against a circle, or +inf. Works from
// inside the circle (returns the exit distance).
double ray_circle(const Vec2& o, const Vec2& dir, const Pillar& c) {
  const Vec2 oc = o - c.center;
  const double b = dir.dot(oc);
  const double q = oc.squaredNorm() - c.radius * c.radius;
  const double disc = b * b - q;
  if (disc < 0.0) return std::numeric_limits<double>::infinity();
  const double root = std::sqrt(disc);
  const double t1 = -b - root;
  if (t1 > 1e-9) return t1;
  const double t2 = -b + root;
  if (t2 > 1e-9) return t2;
  return std::numeric_limits<double>::infinity();
}

}  // namespace

std::vector<Vec2> SceneSpec::corners() const {
  std::vector<Vec2> out;
  for (size_t i = 0; i < walls.size(); ++i) {
    for (size_t j = i + 1; j < walls.size(); ++j) {
      Vec2 p;
      if (!segment_intersection(walls[i], walls[j], &p)) continue;
      if (p.x() < -1e-9 || p.x() > extent.x() + 1e-9 || p.y() < -1e-9 || p.y() > extent.y() + 1e-9)
        continue;
      bool duplicate = false;
      for (const Vec2& q : out) {
        if ((p - q).norm() < 1e-6) {
          duplicate = true;
          break;
        }
      }
      if (!duplicate) out.push_back(p);
    }
  }
  return out;
}

double SceneSpec::clearance(const Vec2& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const Segment& s : walls) best = std::min(best, point_segment_distance(p, s));
  for (const Pillar& c : pillars) best = std::min(best, (p - c.center).norm() - c.radius);
  return best;
}

void SensorSpec::validate() const {
  if (beams <= 0 || !(max_range > 0.0) || noise_sigma < 0.0 || z_layers <= 0 || z_max < z_min)
    throw std::invalid_argument("SensorSpec: invalid field");
}

namespace {

void add_box(SceneSpec& scene, double x0, double y0, double x1, double y1) {
  scene.walls.push_back({{x0, y0}, {x1, y0}});
  scene.walls.push_back({{x1, y0}, {x1, y1}});
  scene.walls.push_back({{x1, y1}, {x0, y1}});
  scene.walls.push_back({{x0, y1}, {x0, y0}});
}

SceneSpec make_rooms(uint64_t seed) {
  // 40 x 40 interior with an irregular mix of wall stubs, L and T pieces,
  // oblique braces and pillar clusters. Walls keep out of the band
  // x in [8, 32], y in [6, 18] that the default trajectory sweeps; thin
  // pillars are allowed between the sweep rows. Shapes and spacings vary
  // along x so different viewpoints see different constellations.
  SceneSpec scene;
  scene.extent = Vec2(40.0, 40.0);
  scene.seed = seed;
  scene.preset = "rooms";
  Rng rng(seed * 7919 + 13);
  auto j = [&rng]() { return rng.uniform(-0.5, 0.5); };
  auto js = [&rng]() { return rng.uniform(-0.25, 0.25); };

  add_box(scene, 0.0, 0.0, 40.0, 40.0);

  // south band (y < 6)
  const double lx = 6.0 + j();
  scene.walls.push_back({{lx, 1.0}, {lx, 4.5 + 0.5 * j()}});
  scene.walls.push_back({{lx, 4.5 + 0.5 * j()}, {lx + 6.0 + j(), 4.5 + 0.5 * j()}});
  scene.walls.push_back({{14.5 + j(), 0.8}, {17.5 + j(), 3.8}});  // small oblique pair
  scene.walls.push_back({{17.5 + j(), 3.8}, {19.5 + j(), 1.0}});
  const double mx = 22.5 + j();
  scene.walls.push_back({{mx, 2.0 + 0.5 * j()}, {mx + 4.5, 2.0 + 0.5 * j()}});
  scene.walls.push_back({{mx + 4.5, 2.0 + 0.5 * j()}, {mx + 4.5, 5.2}});
  scene.walls.push_back({{26.5 + j(), 0.5}, {26.5 + j(), 3.0 + js()}});
  scene.walls.push_back({{31.0 + j(), 1.2}, {37.0 + j(), 4.8}});  // oblique
  scene.walls.push_back({{34.0 + j(), 0.6}, {34.0 + j(), 5.4}});

  // north band (y > 18)
  const double rx = 8.0 + j();
  scene.walls.push_back({{rx, 22.0 + j()}, {rx, 30.0 + j()}});
  scene.walls.push_back({{rx, 30.0 + j()}, {rx + 8.0 + j(), 30.0 + j()}});
  scene.walls.push_back({{rx + 8.0 + j(), 30.0 + j()}, {rx + 8.0 + j(), 26.0}});
  scene.walls.push_back({{18.0 + j(), 21.5 + js()}, {21.0 + j(), 24.5 + j()}});  // oblique stub
  const double tx = 23.0 + j();
  scene.walls.push_back({{tx, 20.0 + 0.5 * j()}, {tx + 7.0, 20.0 + 0.5 * j()}});
  scene.walls.push_back({{tx + 3.5 + j(), 20.0 + 0.5 * j()}, {tx + 3.5 + j(), 26.0 + j()}});
  scene.walls.push_back({{32.0 + j(), 22.0 + j()}, {38.0, 28.0 + j()}});  // oblique
  scene.walls.push_back({{35.0 + j(), 21.0}, {35.0 + j(), 29.0}});
  scene.walls.push_back({{11.5 + j(), 19.6}, {16.0 + j(), 19.6}});
  scene.walls.push_back({{14.0 + js(), 19.6}, {14.0 + js(), 23.0 + j()}});
  scene.walls.push_back({{20.0 + j(), 33.0 + j()}, {27.0 + j(), 36.0 + j()}});  // oblique far north

  // side margins
  scene.walls.push_back({{2.0 + 0.5 * j(), 8.0 + j()}, {2.0 + 0.5 * j(), 16.0 + j()}});
  scene.walls.push_back({{5.0 + 0.5 * j(), 11.0 + j()}, {5.0 + 0.5 * j(), 14.0 + j()}});
  scene.walls.push_back({{38.0 - 0.5 * j(), 9.0 + j()}, {38.0 - 0.5 * j(), 15.0 + j()}});
  scene.walls.push_back({{35.5 + 0.5 * j(), 6.5 + js()}, {38.0, 6.5 + js()}});

  // pillars, tree-trunk sized; the mid-band ones sit between the sweep
  // rows at irregular spacing and anchor the views along the corridor
  auto pr = [&rng]() { return rng.uniform(0.25, 0.5); };
  scene.pillars.push_back({{12.5 + js(), 10.0 + js()}, pr()});
  scene.pillars.push_back({{16.5 + js(), 14.0 + js()}, pr()});
  scene.pillars.push_back({{21.0 + js(), 10.0 + js()}, pr()});
  scene.pillars.push_back({{23.5 + js(), 14.0 + js()}, pr()});
  scene.pillars.push_back({{28.0 + js(), 10.0 + js()}, pr()});
  scene.pillars.push_back({{16.0 + j(), 3.0 + j()}, pr()});
  scene.pillars.push_back({{11.0 + j(), 26.0 + j()}, pr()});
  scene.pillars.push_back({{29.0 + j(), 23.5 + j()}, pr()});
  scene.pillars.push_back({{5.0 + j(), 20.0 + j()}, pr()});
  scene.pillars.push_back({{36.0 + j(), 18.5 + 0.5 * j()}, pr()});
  scene.pillars.push_back({{24.0 + j(), 29.0 + j()}, pr()});
  scene.pillars.push_back({{4.0 + j(), 33.0 + j()}, pr()});
  scene.pillars.push_back({{6.5 + j(), 2.5 + js()}, pr()});
  return scene;
}

SceneSpec make_campus(uint64_t seed) {
  SceneSpec scene;
  scene.extent = Vec2(50.0, 50.0);
  scene.seed = seed;
  scene.preset = "campus";
  Rng rng(seed * 104729 + 7);
  auto j = [&rng]() { return rng.uniform(-0.5, 0.5); };

  add_box(scene, 0.0, 0.0, 50.0, 50.0);
  // two closed buildings and one open one in the north half
  add_box(scene, 6.0 + j(), 24.0 + j(), 16.0 + j(), 34.0 + j());
  add_box(scene, 30.0 + j(), 28.0 + j(), 44.0 + j(), 38.0 + j());
  const double bx = 20.0 + j(), by = 40.0 + j();
  scene.walls.push_back({{bx, by}, {bx + 9.0, by}});
  scene.walls.push_back({{bx, by}, {bx, by + 6.0}});
  // tree rows
  auto pr = [&rng]() { return rng.uniform(0.3, 0.5); };
  for (int i = 0; i < 6; ++i) {
    scene.pillars.push_back({{5.0 + 8.0 * i + j(), 3.5 + j()}, pr()});
  }
  for (int i = 0; i < 4; ++i) {
    scene.pillars.push_back({{46.0 + 0.5 * j(), 8.0 + 6.0 * i + j()}, pr()});
  }
  return scene;
}

SceneSpec make_pillars(uint64_t seed) {
  SceneSpec scene;
  scene.extent = Vec2(40.0, 40.0);
  scene.seed = seed;
  scene.preset = "pillars";
  Rng rng(seed * 31337 + 1);
  // forest-like: irregular pillar field, no walls at all
  const int n = 16;
  for (int i = 0; i < n; ++i) {
    const double gx = 4.0 + 32.0 * rng.uniform();
    const double gy = 20.0 + 18.0 * rng.uniform();
    scene.pillars.push_back({{gx, gy}, rng.uniform(0.3, 0.6)});
  }
  for (int i = 0; i < 6; ++i) {
    scene.pillars.push_back({{4.0 + 32.0 * rng.uniform(), 1.0 + 4.5 * rng.uniform()}, rng.uniform(0.3, 0.6)});
  }
  return scene;
}

}  // namespace

SceneSpec generate_scene(uint64_t seed, const std::string& preset) {
  if (preset == "rooms") return make_rooms(seed);
  if (preset == "campus") return make_campus(seed);
  if (preset == "pillars") return make_pillars(seed);
  throw std::invalid_argument("generate_scene: unknown preset '" + preset + "'");
}

PointCloud simulate_scan(const SceneSpec& scene, const Pose2& pose, const SensorSpec& sensor,
                         uint64_t seed) {
  sensor.validate();
  if (pose.x < 0 || pose.x > scene.extent.x() || pose.y < 0 || pose.y > scene.extent.y())
    throw std::invalid_argument("simulate_scan: pose outside the scene extent");
  Rng rng(seed);
  PointCloud cloud;
  cloud.reserve(static_cast<size_t>(sensor.beams) * sensor.z_layers);
  const Vec2 origin = pose.translation();
  for (int k = 0; k < sensor.beams; ++k) {
    const double angle_local = 2.0 * kPi * k / sensor.beams;
    const double angle_world = pose.yaw + angle_local;
    const Vec2 dir(std::cos(angle_world), std::sin(angle_world));
    double t = std::numeric_limits<double>::infinity();
    for (const Segment& s : scene.walls) t = std::min(t, ray_segment(origin, dir, s));
    for (const Pillar& c : scene.pillars) t = std::min(t, ray_circle(origin, dir, c));
    if (!(t <= sensor.max_range)) continue;
    const double r = sensor.noise_sigma > 0.0 ? t + rng.normal(0.0, sensor.noise_sigma) : t;
    const double lx = r * std::cos(angle_local);
    const double ly = r * std::sin(angle_local);
    for (int zi = 0; zi < sensor.z_layers; ++zi) {
      const double z = sensor.z_layers == 1
                           ? sensor.z_min
                           : sensor.z_min + (sensor.z_max - sensor.z_min) * zi / (sensor.z_layers - 1);
      cloud.push_back({lx, ly, z});
    }
  }
  return cloud;
}

std::vector<Pose2> generate_trajectory(const SceneSpec& scene, double spacing,
                                       const LawnmowerSpec& spec) {
  if (!(spacing > 0.0)) throw std::invalid_argument("generate_trajectory: spacing must be positive");
  if (spec.rows.empty() || spec.x1 <= spec.x0)
    throw std::invalid_argument("generate_trajectory: bad lawnmower spec");

  // waypoints of the serpentine polyline
  std::vector<Vec2> waypoints;
  for (size_t i = 0; i < spec.rows.size(); ++i) {
    const double y = spec.rows[i];
    const bool left_to_right = i % 2 == 0;
    waypoints.emplace_back(left_to_right ? spec.x0 : spec.x1, y);
    waypoints.emplace_back(left_to_right ? spec.x1 : spec.x0, y);
  }

  std::vector<Vec2> positions;
  positions.push_back(waypoints.front());
  for (size_t i = 0; i + 1 < waypoints.size(); ++i) {
    const Vec2 a = waypoints[i], b = waypoints[i + 1];
    const double len = (b - a).norm();
    const double steps_f = len / spacing;
    const auto steps = static_cast<int64_t>(std::llround(steps_f));
    if (std::abs(steps_f - steps) > 1e-9)
      throw std::invalid_argument("generate_trajectory: leg length is not a multiple of spacing");
    const Vec2 dir = (b - a) / len;
    for (int64_t k = 1; k <= steps; ++k) positions.push_back(a + (k * spacing) * dir);
  }

  std::vector<Pose2> poses;
  poses.reserve(positions.size());
  for (size_t i = 0; i < positions.size(); ++i) {
    const Vec2& p = positions[i];
    if (p.x() < 0 || p.x() > scene.extent.x() || p.y() < 0 || p.y() > scene.extent.y() ||
        scene.clearance(p) < 0.5) {
      throw std::runtime_error("generate_trajectory: path blocked near (" + std::to_string(p.x()) +
                               ", " + std::to_string(p.y()) + ")");
    }
    double yaw;
    if (i + 1 < positions.size()) {
      const Vec2 d = positions[i + 1] - p;
      yaw = std::atan2(d.y(), d.x());
    } else {
      yaw = poses.back().yaw;
    }
    poses.emplace_back(p.x(), p.y(), yaw);
  }
  return poses;
}

std::vector<Pose2> generate_trajectory(const SceneSpec& scene, double spacing) {
  LawnmowerSpec spec;
  auto snap = [spacing](double v) { return std::round(v / spacing) * spacing; };
  spec.x0 = snap(0.25 * scene.extent.x());
  spec.x1 = snap(0.75 * scene.extent.x());
  spec.rows = {snap(0.2 * scene.extent.y()), snap(0.3 * scene.extent.y()), snap(0.4 * scene.extent.y())};
  return generate_trajectory(scene, spacing, spec);
}

}  // namespace bevloc
