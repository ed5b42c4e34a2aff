#include "bevloc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bevloc {

double lower_median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

EvalReport evaluate(const std::vector<QueryRecord>& results, const std::vector<TrajectoryEntry>& gt,
                    const std::vector<Pose2>& reference_trajectory,
                    const EvalThresholds& thresholds) {
  if (results.size() != gt.size())
    throw std::invalid_argument("evaluate: result and ground-truth counts differ");

  EvalReport report;
  report.frames = static_cast<int>(results.size());
  std::vector<double> te_values, re_values;

  for (size_t k = 0; k < results.size(); ++k) {
    if (results[k].frame_id != gt[k].frame_id)
      throw std::invalid_argument("evaluate: frame id mismatch at row " + std::to_string(k));
    FrameEval fe;
    fe.frame_id = results[k].frame_id;
    const Pose2& truth = gt[k].pose;

    double ref_dist = 0.0;
    if (!reference_trajectory.empty()) {
      ref_dist = std::numeric_limits<double>::infinity();
      for (const Pose2& ref : reference_trajectory)
        ref_dist = std::min(ref_dist, (truth.translation() - ref.translation()).norm());
    }
    fe.ref_distance_m = ref_dist;

    if (results[k].pose.has_value()) {
      const Pose2& est = *results[k].pose;
      fe.produced = true;
      fe.te_m = (est.translation() - truth.translation()).norm();
      fe.re_deg = std::abs(rad_to_deg(angle_diff(est.yaw, truth.yaw)));
      fe.success = fe.te_m < thresholds.te_max_m && fe.re_deg < thresholds.re_max_deg;
      te_values.push_back(fe.te_m);
      re_values.push_back(fe.re_deg);
      report.produced++;
    }
    if (fe.success) report.successes++;

    const auto bin = static_cast<size_t>(std::floor(ref_dist / kDistanceBinWidth));
    if (report.bins.size() <= bin) {
      const size_t old = report.bins.size();
      report.bins.resize(bin + 1);
      for (size_t b = old; b < report.bins.size(); ++b) {
        report.bins[b].lo = kDistanceBinWidth * static_cast<double>(b);
        report.bins[b].hi = kDistanceBinWidth * static_cast<double>(b + 1);
      }
    }
    report.bins[bin].count++;
    if (fe.success) report.bins[bin].successes++;
    report.per_frame.push_back(fe);
  }

  report.sr_percent = report.frames > 0 ? 100.0 * report.successes / report.frames : 0.0;
  report.median_te_m = lower_median(te_values);
  report.median_re_deg = lower_median(re_values);
  return report;
}

}  // namespace bevloc
