#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bevloc/geometry.hpp"

namespace bevloc {

struct Segment {
  Vec2 a = Vec2::Zero();
  Vec2 b = Vec2::Zero();
};

struct Pillar {
  Vec2 center = Vec2::Zero();
  double radius = 0.5;
};

/// Deterministic synthetic environment on [0, extent.x] x [0, extent.y]:
/// wall segments (axis-aligned and oblique) plus circular pillars.
struct SceneSpec {
  Vec2 extent = Vec2(40.0, 40.0);
  std::vector<Segment> walls;
  std::vector<Pillar> pillars;
  uint64_t seed = 0;
  std::string preset;

  /// Pairwise wall intersections (endpoint contacts included) inside the
  /// extent, deduplicated.
  std::vector<Vec2> corners() const;

  /// Distance from p to the nearest wall or pillar surface; negative
  /// inside a pillar.
  double clearance(const Vec2& p) const;
};

struct SensorSpec {
  int beams = 720;
  double max_range = 50.0;
  double noise_sigma = 0.02;  // meters, along the ray
  int z_layers = 8;
  double z_min = 0.0;
  double z_max = 2.0;

  void validate() const;
};

/// preset must be one of rooms | campus | pillars.
SceneSpec generate_scene(uint64_t seed, const std::string& preset);

/// Cast one beam per angle step from `pose`, return the nearest hit within
/// max range with Gaussian range noise, and replicate each hit across the
/// z layers. Rays are 2D; points are in the sensor frame.
PointCloud simulate_scan(const SceneSpec& scene, const Pose2& pose, const SensorSpec& sensor,
                         uint64_t seed);

/// Serpentine path description: horizontal rows at the given y values from
/// x0 to x1, connected at alternating ends. Every leg length must be a
/// multiple of the sample spacing so consecutive samples are exactly
/// `spacing` apart, corners included.
struct LawnmowerSpec {
  double x0 = 0.0;
  double x1 = 0.0;
  std::vector<double> rows;
};

std::vector<Pose2> generate_trajectory(const SceneSpec& scene, double spacing,
                                       const LawnmowerSpec& spec);

/// Default path: three rows through the lower half of the scene, leaving
/// the upper half unswept so off-trajectory queries have somewhere to be.
std::vector<Pose2> generate_trajectory(const SceneSpec& scene, double spacing);

}  // namespace bevloc
