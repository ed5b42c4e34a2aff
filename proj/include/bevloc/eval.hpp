#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "bevloc/geometry.hpp"
#include "bevloc/landmarks.hpp"

namespace bevloc {

struct EvalThresholds {
  double te_max_m = 2.0;
  double re_max_deg = 5.0;
};

/// One localization outcome, as written to / read from a result file.
struct QueryRecord {
  int64_t frame_id = 0;
  std::optional<Pose2> pose;
  int inliers = 0;
  int pairs = 0;
  double rms = 0.0;
};

struct FrameEval {
  int64_t frame_id = 0;
  bool produced = false;
  bool success = false;
  double te_m = 0.0;
  double re_deg = 0.0;
  double ref_distance_m = 0.0;  // distance from the gt position to the closest reference pose
};

struct DistanceBin {
  double lo = 0.0;
  double hi = 0.0;
  int count = 0;
  int successes = 0;

  double sr_percent() const { return count > 0 ? 100.0 * successes / count : 0.0; }
};

struct EvalReport {
  int frames = 0;
  int produced = 0;
  int successes = 0;
  double sr_percent = 0.0;
  double median_te_m = 0.0;   // NaN when no pose was produced
  double median_re_deg = 0.0;
  std::vector<DistanceBin> bins;  // 3 m bins over distance to the reference trajectory
  std::vector<FrameEval> per_frame;
};

/// Lower-median convention: element (n-1)/2 of the sorted values.
double lower_median(std::vector<double> values);

/// Success: TE < te_max AND RE < re_max; results without a pose count as
/// failures but are excluded from the medians (a median over produced
/// poses). Results and ground truth must carry the same frame ids.
EvalReport evaluate(const std::vector<QueryRecord>& results, const std::vector<TrajectoryEntry>& gt,
                    const std::vector<Pose2>& reference_trajectory, const EvalThresholds& thresholds);

inline constexpr double kDistanceBinWidth = 3.0;

}  // namespace bevloc
