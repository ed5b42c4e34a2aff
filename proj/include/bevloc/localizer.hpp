#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "bevloc/bev.hpp"
#include "bevloc/geometry.hpp"
#include "bevloc/model.hpp"
#include "bevloc/rng.hpp"

namespace bevloc {

struct LocalizerConfig {
  int max_peaks = 64;           // n strongest local maxima
  int min_peak_distance = 3;    // pixels; suppression window half-width
  double peak_threshold_ratio = 0.1;  // threshold = ratio * global max score
  int ransac_iterations = 2000;
  double inlier_threshold = 1.0;      // meters
  int min_inliers = 4;
  double min_pair_separation = 0.5;   // meters; degenerate-sample guard
  bool refine = true;
  uint64_t seed = 0;

  void validate() const;
};

struct Peak {
  int u = 0;
  int v = 0;
  double score = 0.0;
};

struct CorrespondencePair {
  Vec2 local = Vec2::Zero();   // sensor frame, meters
  int landmark = -1;
  Vec2 global = Vec2::Zero();  // from the landmark table
  double score = 0.0;
};

struct LocalizationResult {
  std::optional<Pose2> pose;
  std::vector<int> inlier_indices;  // into the pair list
  int total_pairs = 0;
  double rms = 0.0;  // inlier residual RMS, meters (0 when no pose)
  std::string failure_reason;

  int inliers() const { return static_cast<int>(inlier_indices.size()); }
};

/// Strongest local maxima of the heatmap. A pixel qualifies iff its score
/// is >= every score in its (2*min_peak_distance+1)^2 neighborhood, is
/// strictly greater than at least one of them (flat regions produce no
/// peaks), is first in row-major order among equal-valued neighbors, and
/// clears the threshold. Sorted by score descending, truncated to
/// max_peaks.
std::vector<Peak> detect_peaks(const Eigen::MatrixXd& heatmap, const LocalizerConfig& cfg);

/// Center of the pixel in local metric coordinates; exact inverse of the
/// projection convention.
Vec2 pixel_to_local(int u, int v, const BevConfig& bev);

/// Patch-grid cell of a pixel, then arg-max over the landmark logits at
/// that cell (lowest index on ties). Returns the landmark index and its
/// global coordinates.
std::pair<int, Vec2> lookup_correspondence(const Eigen::MatrixXd& corr, int u, int v,
                                           const BevConfig& bev, int d_p,
                                           const Eigen::MatrixXd& lambda);

/// 2-point RANSAC for a planar rigid transform local -> global, followed
/// by a closed-form least-squares refit on the inlier set.
LocalizationResult ransac_pose(const std::vector<CorrespondencePair>& pairs,
                               const LocalizerConfig& cfg, Rng& rng);

/// Full pipeline: rasterize, run the network, detect peaks, look up
/// correspondences, estimate the pose.
LocalizationResult localize(const PointCloud& cloud, const Bundle& bundle,
                            const LocalizerConfig& cfg);

/// The correspondence pairs the localizer would feed RANSAC, exposed for
/// inspection tools.
std::vector<CorrespondencePair> correspondence_pairs(const ForwardOutput& out, const Bundle& bundle,
                                                     const LocalizerConfig& cfg);

}  // namespace bevloc
