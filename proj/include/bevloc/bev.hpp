#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <utility>

#include "bevloc/geometry.hpp"
#include "bevloc/rng.hpp"

namespace bevloc {

/// Geometry of the bird's-eye-view raster.
///
/// Pixel convention (fixed here and relied on everywhere): pixel (u, v)
/// covers local x in [(u - W/2)*s, (u - W/2 + 1)*s) and local y likewise
/// with v, where s = pixel_size. u indexes the x-axis (rightward), v the
/// y-axis (upward). Rasters are stored as Eigen matrices indexed (v, u).
/// The sensor origin maps to the image center.
struct BevConfig {
  int width_px = 512;
  int height_px = 512;
  double pixel_size = 0.2;  // meters per pixel
  double voxel_size = 0.1;  // meters, pre-projection downsampling

  double coverage_x() const { return width_px * pixel_size; }
  double coverage_y() const { return height_px * pixel_size; }

  /// 512 x 512 at 0.2 m: 102.4 m x 102.4 m covered area.
  static BevConfig reference() { return BevConfig{512, 512, 0.2, 0.1}; }
  /// 64 x 64 at 0.25 m, used by the small-scene test pipeline.
  static BevConfig desk() { return BevConfig{64, 64, 0.25, 0.1}; }

  void validate() const;
  bool operator==(const BevConfig&) const = default;
};

/// Center of pixel (u, v) in local metric coordinates.
Vec2 pixel_center_local(int u, int v, const BevConfig& config);

/// Density raster plus the raw per-pixel point counts it was normalized
/// from. Freshly projected images have max(density) == 1.0 exactly
/// whenever any point landed in the raster; augmentation resamples counts
/// without renormalizing.
struct BevImage {
  BevConfig config;
  Eigen::MatrixXd density;  // height_px x width_px, (v, u), values in [0, 1]
  Eigen::MatrixXi count;    // height_px x width_px

  bool occupied(int v, int u) const { return count(v, u) > 0; }
};

/// Per-pixel global coordinates. Generated maps are affine in pixel
/// indices and stay affine under augmentation, so the exact map
///   global = pixel_to_global * (u_px, v_px) + origin
/// (continuous pixel coordinates, pixel (u,v) center at (u+0.5, v+0.5))
/// is stored alongside the materialized grids.
struct CoordinateMap {
  BevConfig config;
  Eigen::Matrix2d pixel_to_global = Eigen::Matrix2d::Identity();
  Vec2 origin = Vec2::Zero();
  Eigen::MatrixXd gx;  // height_px x width_px, global x at pixel centers
  Eigen::MatrixXd gy;

  /// Evaluate the affine map at a continuous pixel position.
  Vec2 at(double u_px, double v_px) const {
    return pixel_to_global * Vec2(u_px, v_px) + origin;
  }
  void materialize();
};

/// Training-time warp. Translation is a fraction of the image dimensions
/// in [-0.25, 0.25], rotation in [0, 2pi), scale in [0.5, 1.5].
struct AugmentParams {
  double translation_frac_x = 0.0;
  double translation_frac_y = 0.0;
  double rotation = 0.0;
  double scale = 1.0;

  static AugmentParams identity() { return {}; }
  static AugmentParams sample(Rng& rng, double translation_max = 0.25,
                              double rotation_min = 0.0, double rotation_max = 2.0 * kPi,
                              double scale_min = 0.5, double scale_max = 1.5);
};

struct CloudFilterStats {
  int64_t dropped_nonfinite = 0;
  int64_t dropped_out_of_area = 0;
};

/// Voxel grid filter: at most one point per occupied voxel, equal to the
/// centroid of that voxel's points. Output sorted by voxel index.
/// Points with a non-finite coordinate are dropped (counted in stats).
PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size,
                            CloudFilterStats* stats = nullptr);

/// Rasterize a local point cloud into a density image. Points outside the
/// covered area are dropped; density is count / max(count).
BevImage project_bev(const PointCloud& cloud, const BevConfig& config,
                     CloudFilterStats* stats = nullptr);

/// Global coordinate of every pixel center under `pose`.
CoordinateMap build_coordinate_map(const Pose2& pose, const BevConfig& config);

/// Warp image and coordinate map by the same pixel-space similarity
/// (rotation about the image center, then scale, then translation).
/// Density and count are resampled nearest-neighbor; the coordinate map is
/// re-derived analytically, so its values stay metrically exact.
std::pair<BevImage, CoordinateMap> augment(const BevImage& image, const CoordinateMap& map,
                                           const AugmentParams& params);

/// The pixel-space warp used by augment(), exposed for tests.
Similarity2 augment_warp(const AugmentParams& params, const BevConfig& config);

}  // namespace bevloc
