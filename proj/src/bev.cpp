#include "bevloc/bev.hpp"

#include <map>
#include <stdexcept>
#include <tuple>

namespace bevloc {

void BevConfig::validate() const {
  if (width_px <= 0 || height_px <= 0) throw std::invalid_argument("BevConfig: non-positive raster size");
  if (!(pixel_size > 0.0)) throw std::invalid_argument("BevConfig: pixel_size must be positive");
  if (!(voxel_size > 0.0)) throw std::invalid_argument("BevConfig: voxel_size must be positive");
}

Vec2 pixel_center_local(int u, int v, const BevConfig& config) {
  const double s = config.pixel_size;
  return Vec2((u - config.width_px / 2.0 + 0.5) * s, (v - config.height_px / 2.0 + 0.5) * s);
}

void CoordinateMap::materialize() {
  gx.resize(config.height_px, config.width_px);
  gy.resize(config.height_px, config.width_px);
  for (int v = 0; v < config.height_px; ++v) {
    for (int u = 0; u < config.width_px; ++u) {
      const Vec2 g = at(u + 0.5, v + 0.5);
      gx(v, u) = g.x();
      gy(v, u) = g.y();
    }
  }
}

AugmentParams AugmentParams::sample(Rng& rng, double translation_max, double rotation_min,
                                    double rotation_max, double scale_min, double scale_max) {
  AugmentParams p;
  p.translation_frac_x = rng.uniform(-translation_max, translation_max);
  p.translation_frac_y = rng.uniform(-translation_max, translation_max);
  p.rotation = rng.uniform(rotation_min, rotation_max);
  p.scale = rng.uniform(scale_min, scale_max);
  return p;
}

PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size, CloudFilterStats* stats) {
  if (!(voxel_size > 0.0)) throw std::invalid_argument("voxel_downsample: voxel_size must be positive");
  struct Accum {
    double x = 0, y = 0, z = 0;
    int64_t n = 0;
  };
  // Ordered map keyed by voxel index gives the deterministic output order.
  std::map<std::tuple<int64_t, int64_t, int64_t>, Accum> voxels;
  for (const Point3& p : cloud) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      if (stats) stats->dropped_nonfinite++;
      continue;
    }
    const auto key = std::make_tuple(static_cast<int64_t>(std::floor(p.x / voxel_size)),
                                     static_cast<int64_t>(std::floor(p.y / voxel_size)),
                                     static_cast<int64_t>(std::floor(p.z / voxel_size)));
    Accum& a = voxels[key];
    a.x += p.x;
    a.y += p.y;
    a.z += p.z;
    a.n++;
  }
  PointCloud out;
  out.reserve(voxels.size());
  for (const auto& [key, a] : voxels) {
    out.push_back({a.x / a.n, a.y / a.n, a.z / a.n});
  }
  return out;
}

BevImage project_bev(const PointCloud& cloud, const BevConfig& config, CloudFilterStats* stats) {
  config.validate();
  BevImage img;
  img.config = config;
  img.count = Eigen::MatrixXi::Zero(config.height_px, config.width_px);
  img.density = Eigen::MatrixXd::Zero(config.height_px, config.width_px);

  const double s = config.pixel_size;
  for (const Point3& p : cloud) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      if (stats) stats->dropped_nonfinite++;
      continue;
    }
    const double fu = std::floor(p.x / s + config.width_px / 2.0);
    const double fv = std::floor(p.y / s + config.height_px / 2.0);
    if (fu < 0 || fu >= config.width_px || fv < 0 || fv >= config.height_px) {
      if (stats) stats->dropped_out_of_area++;
      continue;
    }
    img.count(static_cast<int>(fv), static_cast<int>(fu))++;
  }
  const int max_count = img.count.maxCoeff();
  if (max_count > 0) {
    img.density = img.count.cast<double>() / static_cast<double>(max_count);
  }
  return img;
}

CoordinateMap build_coordinate_map(const Pose2& pose, const BevConfig& config) {
  config.validate();
  CoordinateMap map;
  map.config = config;
  // local(p_px) = s * (p_px - c0), global = R * local + t
  const Eigen::Matrix2d r = pose.rotation();
  const Vec2 c0(config.width_px / 2.0, config.height_px / 2.0);
  map.pixel_to_global = r * config.pixel_size;
  map.origin = pose.translation() - map.pixel_to_global * c0;
  map.materialize();
  return map;
}

Similarity2 augment_warp(const AugmentParams& params, const BevConfig& config) {
  const Vec2 c(config.width_px / 2.0, config.height_px / 2.0);
  const Vec2 t(params.translation_frac_x * config.width_px,
               params.translation_frac_y * config.height_px);
  // rotate/scale about the image center, then translate
  return compose(Similarity2::translate(c + t),
                 compose(Similarity2(params.rotation, Vec2::Zero(), params.scale),
                         Similarity2::translate(-c)));
}

std::pair<BevImage, CoordinateMap> augment(const BevImage& image, const CoordinateMap& map,
                                           const AugmentParams& params) {
  if (!(image.config == map.config)) throw std::invalid_argument("augment: image and map configs differ");
  const BevConfig& cfg = image.config;
  const Similarity2 inv = invert(augment_warp(params, cfg));

  BevImage out_img;
  out_img.config = cfg;
  out_img.count = Eigen::MatrixXi::Zero(cfg.height_px, cfg.width_px);
  out_img.density = Eigen::MatrixXd::Zero(cfg.height_px, cfg.width_px);

  const Eigen::Matrix2d inv_lin = inv.linear();
  for (int v = 0; v < cfg.height_px; ++v) {
    for (int u = 0; u < cfg.width_px; ++u) {
      const Vec2 src = inv_lin * Vec2(u + 0.5, v + 0.5) + inv.translation;
      const double fu = std::floor(src.x());
      const double fv = std::floor(src.y());
      if (fu < 0 || fu >= cfg.width_px || fv < 0 || fv >= cfg.height_px) continue;
      const int su = static_cast<int>(fu), sv = static_cast<int>(fv);
      out_img.count(v, u) = image.count(sv, su);
      out_img.density(v, u) = image.density(sv, su);
    }
  }

  CoordinateMap out_map;
  out_map.config = cfg;
  // map'(p) = map(inv(p)), composed analytically so the supervision
  // coordinates carry no resampling error.
  out_map.pixel_to_global = map.pixel_to_global * inv_lin;
  out_map.origin = map.pixel_to_global * inv.translation + map.origin;
  out_map.materialize();
  return {std::move(out_img), std::move(out_map)};
}

}  // namespace bevloc
