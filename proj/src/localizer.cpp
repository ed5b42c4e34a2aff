#include "bevloc/localizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bevloc {

void LocalizerConfig::validate() const {
  if (max_peaks < 3) throw std::invalid_argument("LocalizerConfig: max_peaks must be >= 3");
  if (min_peak_distance < 1) throw std::invalid_argument("LocalizerConfig: min_peak_distance must be >= 1");
  if (ransac_iterations < 1 || min_inliers < 2 || !(inlier_threshold > 0.0))
    throw std::invalid_argument("LocalizerConfig: bad RANSAC settings");
}

std::vector<Peak> detect_peaks(const Eigen::MatrixXd& heatmap, const LocalizerConfig& cfg) {
  cfg.validate();
  const int h = static_cast<int>(heatmap.rows());
  const int w = static_cast<int>(heatmap.cols());
  const int r = cfg.min_peak_distance;
  const double threshold = cfg.peak_threshold_ratio * heatmap.maxCoeff();

  std::vector<Peak> peaks;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const double s = heatmap(v, u);
      if (s < threshold) continue;
      bool is_max = true;
      bool strictly_above_one = false;
      bool first_among_ties = true;
      for (int dv = -r; dv <= r && is_max; ++dv) {
        const int vv = v + dv;
        if (vv < 0 || vv >= h) continue;
        for (int du = -r; du <= r; ++du) {
          const int uu = u + du;
          if (uu < 0 || uu >= w || (dv == 0 && du == 0)) continue;
          const double q = heatmap(vv, uu);
          if (q > s) {
            is_max = false;
            break;
          }
          if (q < s) strictly_above_one = true;
          if (q == s && int64_t(vv) * w + uu < int64_t(v) * w + u) first_among_ties = false;
        }
      }
      if (is_max && strictly_above_one && first_among_ties) peaks.push_back({u, v, s});
    }
  }
  std::sort(peaks.begin(), peaks.end(), [w](const Peak& a, const Peak& b) {
    if (a.score != b.score) return a.score > b.score;
    return int64_t(a.v) * w + a.u < int64_t(b.v) * w + b.u;
  });
  if (static_cast<int>(peaks.size()) > cfg.max_peaks) peaks.resize(cfg.max_peaks);
  return peaks;
}

Vec2 pixel_to_local(int u, int v, const BevConfig& bev) {
  if (u < 0 || u >= bev.width_px || v < 0 || v >= bev.height_px)
    throw std::invalid_argument("pixel_to_local: pixel out of bounds");
  return pixel_center_local(u, v, bev);
}

std::pair<int, Vec2> lookup_correspondence(const Eigen::MatrixXd& corr, int u, int v,
                                           const BevConfig& bev, int d_p,
                                           const Eigen::MatrixXd& lambda) {
  const int pu = u * d_p / bev.width_px;
  const int pv = v * d_p / bev.height_px;
  const int cell = pv * d_p + pu;
  if (cell < 0 || cell >= corr.rows())
    throw std::invalid_argument("lookup_correspondence: pixel outside the patch grid");
  int best = 0;
  double best_score = corr(cell, 0);
  for (int j = 1; j < corr.cols(); ++j) {
    if (corr(cell, j) > best_score) {  // ties keep the lowest index
      best_score = corr(cell, j);
      best = j;
    }
  }
  return {best, lambda.row(best).transpose()};
}

namespace {

struct RigidFit {
  double yaw = 0.0;
  Vec2 t = Vec2::Zero();
};

Vec2 apply_fit(const RigidFit& f, const Vec2& p) {
  const double c = std::cos(f.yaw), s = std::sin(f.yaw);
  return Vec2(c * p.x() - s * p.y() + f.t.x(), s * p.x() + c * p.y() + f.t.y());
}

// Closed-form least-squares planar rigid fit local -> global: rotation from
// the centered cross-covariance angle, translation closing the centroids.
RigidFit least_squares_rigid(const std::vector<CorrespondencePair>& pairs,
                             const std::vector<int>& idx) {
  Vec2 cl = Vec2::Zero(), cg = Vec2::Zero();
  for (int i : idx) {
    cl += pairs[i].local;
    cg += pairs[i].global;
  }
  cl /= static_cast<double>(idx.size());
  cg /= static_cast<double>(idx.size());
  double sin_sum = 0.0, cos_sum = 0.0;
  for (int i : idx) {
    const Vec2 l = pairs[i].local - cl;
    const Vec2 g = pairs[i].global - cg;
    cos_sum += l.dot(g);
    sin_sum += l.x() * g.y() - l.y() * g.x();
  }
  RigidFit fit;
  fit.yaw = std::atan2(sin_sum, cos_sum);
  const double c = std::cos(fit.yaw), s = std::sin(fit.yaw);
  fit.t = cg - Vec2(c * cl.x() - s * cl.y(), s * cl.x() + c * cl.y());
  return fit;
}

std::vector<int> inliers_of(const RigidFit& fit, const std::vector<CorrespondencePair>& pairs,
                            double threshold) {
  std::vector<int> idx;
  for (size_t i = 0; i < pairs.size(); ++i) {
    if ((apply_fit(fit, pairs[i].local) - pairs[i].global).norm() <= threshold)
      idx.push_back(static_cast<int>(i));
  }
  return idx;
}

double rms_of(const RigidFit& fit, const std::vector<CorrespondencePair>& pairs,
              const std::vector<int>& idx) {
  if (idx.empty()) return 0.0;
  double sum = 0.0;
  for (int i : idx) sum += (apply_fit(fit, pairs[i].local) - pairs[i].global).squaredNorm();
  return std::sqrt(sum / static_cast<double>(idx.size()));
}

}  // namespace

LocalizationResult ransac_pose(const std::vector<CorrespondencePair>& pairs,
                               const LocalizerConfig& cfg, Rng& rng) {
  cfg.validate();
  LocalizationResult result;
  result.total_pairs = static_cast<int>(pairs.size());
  if (pairs.size() < 2) {
    result.failure_reason = "fewer than 2 correspondence pairs";
    return result;
  }

  const auto n = static_cast<uint64_t>(pairs.size());
  int best_count = 0;
  RigidFit best_fit;
  bool have_model = false;
  for (int it = 0; it < cfg.ransac_iterations; ++it) {
    const auto i = static_cast<size_t>(rng.uniform_int(n));
    auto j = static_cast<size_t>(rng.uniform_int(n - 1));
    if (j >= i) ++j;
    const Vec2 dl = pairs[j].local - pairs[i].local;
    if (dl.norm() < cfg.min_pair_separation) continue;  // degenerate sample
    const Vec2 dg = pairs[j].global - pairs[i].global;

    RigidFit fit;
    fit.yaw = std::atan2(dl.x() * dg.y() - dl.y() * dg.x(), dl.dot(dg));
    const double c = std::cos(fit.yaw), s = std::sin(fit.yaw);
    const Vec2 ri(c * pairs[i].local.x() - s * pairs[i].local.y(),
                  s * pairs[i].local.x() + c * pairs[i].local.y());
    const Vec2 rj(c * pairs[j].local.x() - s * pairs[j].local.y(),
                  s * pairs[j].local.x() + c * pairs[j].local.y());
    fit.t = 0.5 * ((pairs[i].global - ri) + (pairs[j].global - rj));

    const int count = static_cast<int>(inliers_of(fit, pairs, cfg.inlier_threshold).size());
    if (count > best_count) {
      best_count = count;
      best_fit = fit;
      have_model = true;
    }
  }

  if (!have_model || best_count < cfg.min_inliers) {
    result.failure_reason = "not enough inliers";
    return result;
  }

  std::vector<int> inliers = inliers_of(best_fit, pairs, cfg.inlier_threshold);
  RigidFit fit = best_fit;
  if (cfg.refine) {
    fit = least_squares_rigid(pairs, inliers);
    inliers = inliers_of(fit, pairs, cfg.inlier_threshold);
    if (static_cast<int>(inliers.size()) < cfg.min_inliers) {
      result.failure_reason = "refinement lost the inlier support";
      return result;
    }
  }
  result.pose = Pose2(fit.t.x(), fit.t.y(), fit.yaw);
  result.inlier_indices = std::move(inliers);
  result.rms = rms_of(fit, pairs, result.inlier_indices);
  return result;
}

std::vector<CorrespondencePair> correspondence_pairs(const ForwardOutput& out, const Bundle& bundle,
                                                     const LocalizerConfig& cfg) {
  std::vector<CorrespondencePair> pairs;
  const auto peaks = detect_peaks(out.heatmap, cfg);
  pairs.reserve(peaks.size());
  for (const Peak& peak : peaks) {
    CorrespondencePair pair;
    pair.local = pixel_to_local(peak.u, peak.v, bundle.bev);
    const auto [index, global] = lookup_correspondence(out.corr, peak.u, peak.v, bundle.bev,
                                                       bundle.model.config().d_p,
                                                       bundle.model.landmarks());
    pair.landmark = index;
    pair.global = global;
    pair.score = peak.score;
    pairs.push_back(pair);
  }
  return pairs;
}

LocalizationResult localize(const PointCloud& cloud, const Bundle& bundle,
                            const LocalizerConfig& cfg) {
  cfg.validate();
  LocalizationResult result;
  if (cloud.empty()) {
    result.failure_reason = "empty point cloud";
    return result;
  }
  const BevImage image = project_bev(voxel_downsample(cloud, bundle.bev.voxel_size), bundle.bev);
  if (image.count.maxCoeff() == 0) {
    result.failure_reason = "no points inside the covered area";
    return result;
  }
  const ForwardOutput out = bundle.model.forward(image);
  const auto pairs = correspondence_pairs(out, bundle, cfg);
  Rng rng(cfg.seed);
  return ransac_pose(pairs, cfg, rng);
}

}  // namespace bevloc
