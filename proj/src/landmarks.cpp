#include "bevloc/landmarks.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <stdexcept>

namespace bevloc {

void LandmarkInitConfig::validate() const {
  if (d_p <= 0) throw std::invalid_argument("LandmarkInitConfig: d_p must be positive");
  if (!(rho_lm > 0.0) || rho_lm > 1.5) throw std::invalid_argument("LandmarkInitConfig: rho_lm must be in (0, 1.5]");
}

std::vector<Vec2> patch_centers_for_pose(const Pose2& pose, const BevConfig& bev, int d_p) {
  if (d_p <= 0 || bev.width_px % d_p != 0 || bev.height_px % d_p != 0) {
    throw std::invalid_argument("patch_centers_for_pose: d_p must divide the raster dimensions");
  }
  const double px = static_cast<double>(bev.width_px) / d_p;
  const double py = static_cast<double>(bev.height_px) / d_p;
  const double s = bev.pixel_size;
  std::vector<Vec2> centers;
  centers.reserve(static_cast<size_t>(d_p) * d_p);
  for (int pv = 0; pv < d_p; ++pv) {
    for (int pu = 0; pu < d_p; ++pu) {
      const Vec2 local(((pu + 0.5) * px - bev.width_px / 2.0) * s,
                       ((pv + 0.5) * py - bev.height_px / 2.0) * s);
      centers.push_back(local_to_global(pose, local));
    }
  }
  return centers;
}

std::vector<Vec2> grid_average_filter(const std::vector<Vec2>& points, double s_grid) {
  if (!(s_grid > 0.0)) throw std::invalid_argument("grid_average_filter: s_grid must be positive");
  struct Accum {
    double x = 0, y = 0;
    int64_t n = 0;
  };
  std::map<std::pair<int64_t, int64_t>, Accum> cells;
  for (const Vec2& p : points) {
    const auto key = std::make_pair(static_cast<int64_t>(std::floor(p.x() / s_grid)),
                                    static_cast<int64_t>(std::floor(p.y() / s_grid)));
    Accum& a = cells[key];
    a.x += p.x();
    a.y += p.y();
    a.n++;
  }
  std::vector<Vec2> out;
  out.reserve(cells.size());
  for (const auto& [key, a] : cells) out.emplace_back(a.x / a.n, a.y / a.n);
  return out;
}

LandmarkSet init_landmarks(const std::vector<Pose2>& keyframes, const BevConfig& bev,
                           const LandmarkInitConfig& cfg) {
  cfg.validate();
  if (keyframes.empty()) throw std::invalid_argument("init_landmarks: empty trajectory");
  std::vector<Vec2> candidates;
  candidates.reserve(keyframes.size() * static_cast<size_t>(cfg.d_p) * cfg.d_p);
  for (const Pose2& pose : keyframes) {
    const auto centers = patch_centers_for_pose(pose, bev, cfg.d_p);
    candidates.insert(candidates.end(), centers.begin(), centers.end());
  }
  const auto filtered = grid_average_filter(candidates, cfg.s_grid(bev));
  if (filtered.empty()) throw std::runtime_error("init_landmarks: no landmarks produced");
  LandmarkSet lm;
  lm.coords.resize(static_cast<Eigen::Index>(filtered.size()), 2);
  for (size_t i = 0; i < filtered.size(); ++i) lm.coords.row(static_cast<Eigen::Index>(i)) = filtered[i].transpose();
  return lm;
}

std::pair<int, double> nearest_point(const Eigen::MatrixXd& coords, const Vec2& q) {
  if (coords.rows() < 1) throw std::invalid_argument("nearest_point: empty coordinate set");
  int best = 0;
  double best_sq = std::numeric_limits<double>::infinity();
  for (int j = 0; j < coords.rows(); ++j) {
    const double dx = coords(j, 0) - q.x();
    const double dy = coords(j, 1) - q.y();
    const double sq = dx * dx + dy * dy;
    if (sq < best_sq) {  // strict: ties keep the lowest index
      best_sq = sq;
      best = j;
    }
  }
  return {best, std::sqrt(best_sq)};
}

std::pair<int, double> nearest_landmark(const LandmarkSet& lm, const Vec2& q) {
  return nearest_point(lm.coords, q);
}

NearestLandmarkIndex::NearestLandmarkIndex(const LandmarkSet& lm, int linear_scan_limit) : lm_(lm) {
  if (lm.size() < 1) throw std::invalid_argument("NearestLandmarkIndex: empty landmark set");
  if (lm.size() <= linear_scan_limit) return;
  use_grid_ = true;
  const double min_x = lm.coords.col(0).minCoeff();
  const double max_x = lm.coords.col(0).maxCoeff();
  const double min_y = lm.coords.col(1).minCoeff();
  const double max_y = lm.coords.col(1).maxCoeff();
  const double span = std::max({max_x - min_x, max_y - min_y, 1e-9});
  // aim for a handful of landmarks per cell
  cell_ = span / std::max(1.0, std::sqrt(static_cast<double>(lm.size())));
  min_x_ = min_x;
  min_y_ = min_y;
  nx_ = static_cast<int>(std::floor((max_x - min_x) / cell_)) + 1;
  ny_ = static_cast<int>(std::floor((max_y - min_y) / cell_)) + 1;
  cells_.assign(static_cast<size_t>(nx_) * ny_, {});
  for (int j = 0; j < lm.size(); ++j) {
    const int cx = static_cast<int>(std::floor((lm.coords(j, 0) - min_x_) / cell_));
    const int cy = static_cast<int>(std::floor((lm.coords(j, 1) - min_y_) / cell_));
    cells_[static_cast<size_t>(cy) * nx_ + cx].push_back(j);
  }
}

std::pair<int, double> NearestLandmarkIndex::query(const Vec2& q) const {
  if (!use_grid_) return nearest_landmark(lm_, q);
  const int qx = static_cast<int>(std::floor((q.x() - min_x_) / cell_));
  const int qy = static_cast<int>(std::floor((q.y() - min_y_) / cell_));
  int best = -1;
  double best_sq = std::numeric_limits<double>::infinity();
  const int max_ring = std::max(nx_, ny_) + std::max(std::abs(qx), std::abs(qy)) + 2;
  for (int ring = 0; ring <= max_ring; ++ring) {
    // once a candidate is known, stop as soon as the ring cannot beat it
    if (best >= 0) {
      const double ring_min = (ring - 1) * cell_;
      if (ring_min > 0 && ring_min * ring_min > best_sq) break;
    }
    for (int cy = qy - ring; cy <= qy + ring; ++cy) {
      if (cy < 0 || cy >= ny_) continue;
      for (int cx = qx - ring; cx <= qx + ring; ++cx) {
        if (cx < 0 || cx >= nx_) continue;
        if (std::max(std::abs(cx - qx), std::abs(cy - qy)) != ring) continue;  // ring shell only
        for (int j : cells_[static_cast<size_t>(cy) * nx_ + cx]) {
          const double dx = lm_.coords(j, 0) - q.x();
          const double dy = lm_.coords(j, 1) - q.y();
          const double sq = dx * dx + dy * dy;
          if (sq < best_sq || (sq == best_sq && j < best)) {
            best_sq = sq;
            best = j;
          }
        }
      }
    }
  }
  return {best, std::sqrt(best_sq)};
}

std::vector<TrajectoryEntry> keyframe_select(const std::vector<TrajectoryEntry>& trajectory,
                                             double min_separation) {
  if (!(min_separation > 0.0)) throw std::invalid_argument("keyframe_select: min_separation must be positive");
  std::vector<TrajectoryEntry> kept;
  for (const auto& entry : trajectory) {
    if (kept.empty()) {
      kept.push_back(entry);
      continue;
    }
    const Vec2 d = entry.pose.translation() - kept.back().pose.translation();
    if (d.norm() >= min_separation) kept.push_back(entry);
  }
  return kept;
}

}  // namespace bevloc
