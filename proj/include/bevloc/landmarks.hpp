#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <utility>
#include <vector>

#include "bevloc/bev.hpp"
#include "bevloc/geometry.hpp"

namespace bevloc {

/// The global landmark set: L learnable 2D coordinates stored as an L x 2
/// matrix. Row j is landmark j; indices are stable identities for the life
/// of a trained bundle.
struct LandmarkSet {
  Eigen::MatrixXd coords;
  bool learnable = true;

  int size() const { return static_cast<int>(coords.rows()); }
  Vec2 at(int j) const { return coords.row(j).transpose(); }
};

/// Exact arg-min of Euclidean distance over the rows of an L x 2 matrix,
/// ties broken by lowest index. Shared by landmark queries and the loss so
/// the two always agree.
std::pair<int, double> nearest_point(const Eigen::MatrixXd& coords, const Vec2& q);

/// Controls the density of the initial landmark set.
/// l_patch is the metric patch edge length, s_grid the downsampling grid
/// size derived from the landmark density rho_lm: s_grid = l_patch / sqrt(rho_lm).
struct LandmarkInitConfig {
  int d_p = 16;
  double rho_lm = 0.2;

  double l_patch(const BevConfig& bev) const { return bev.width_px * bev.pixel_size / d_p; }
  double s_grid(const BevConfig& bev) const { return l_patch(bev) / std::sqrt(rho_lm); }
  void validate() const;
};

struct TrajectoryEntry {
  int64_t frame_id = 0;
  Pose2 pose;
};

/// Global coordinates of the d_p x d_p patch centers of the BEV area
/// covered from `pose`. Row-major patch order (pv outer, pu inner).
std::vector<Vec2> patch_centers_for_pose(const Pose2& pose, const BevConfig& bev, int d_p);

/// One point per occupied grid cell (cells anchored at the global origin),
/// equal to the mean of the cell's members. Output sorted by cell index.
std::vector<Vec2> grid_average_filter(const std::vector<Vec2>& points, double s_grid);

/// Accumulate patch centers over all keyframes, then grid-average filter.
LandmarkSet init_landmarks(const std::vector<Pose2>& keyframes, const BevConfig& bev,
                           const LandmarkInitConfig& cfg);

/// Exact arg-min of Euclidean distance, ties broken by lowest index.
/// Linear scan; the reference everything else must agree with.
std::pair<int, double> nearest_landmark(const LandmarkSet& lm, const Vec2& q);

/// Spatial accelerator for nearest-landmark queries. Uses a uniform grid
/// once the set is large; agrees exactly (index and distance) with the
/// linear scan.
class NearestLandmarkIndex {
 public:
  explicit NearestLandmarkIndex(const LandmarkSet& lm, int linear_scan_limit = 10000);
  std::pair<int, double> query(const Vec2& q) const;

 private:
  const LandmarkSet& lm_;
  bool use_grid_ = false;
  double cell_ = 1.0;
  double min_x_ = 0.0, min_y_ = 0.0;
  int nx_ = 0, ny_ = 0;
  std::vector<std::vector<int>> cells_;
};

/// Greedy minimum-spatial-separation filter: keep a frame iff its position
/// is at least `min_separation` from the last kept frame; the first frame
/// is always kept.
std::vector<TrajectoryEntry> keyframe_select(const std::vector<TrajectoryEntry>& trajectory,
                                             double min_separation = 0.5);

}  // namespace bevloc
