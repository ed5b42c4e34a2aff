#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <tuple>

#include "bevloc/bev.hpp"
#include "bevloc/rng.hpp"

using namespace bevloc;

TEST_CASE("voxel_downsample basics") {
  CHECK(voxel_downsample({}, 1.0).empty());

  const PointCloud one{{0.2, 0.3, 0.4}};
  const PointCloud same = voxel_downsample(one, 1.0);
  REQUIRE(same.size() == 1);
  CHECK(same[0].x == doctest::Approx(0.2));

  const PointCloud pair{{0.0, 0.0, 0.0}, {0.1, 0.0, 0.0}};
  const PointCloud merged = voxel_downsample(pair, 1.0);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].x == doctest::Approx(0.05));
  CHECK(merged[0].y == 0.0);
}

TEST_CASE("voxel_downsample matches a brute-force voxel hash") {
  Rng rng(5);
  PointCloud cloud;
  for (int i = 0; i < 10000; ++i)
    cloud.push_back({rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0, 10)});
  const PointCloud out = voxel_downsample(cloud, 1.0);
  CHECK(out.size() <= 1000);

  // independent accumulation
  std::map<std::tuple<int, int, int>, std::tuple<double, double, double, int>> oracle;
  for (const Point3& p : cloud) {
    auto key = std::make_tuple(int(std::floor(p.x)), int(std::floor(p.y)), int(std::floor(p.z)));
    auto& [sx, sy, sz, n] = oracle[key];
    sx += p.x;
    sy += p.y;
    sz += p.z;
    n += 1;
  }
  REQUIRE(out.size() == oracle.size());
  for (const Point3& p : out) {
    auto key = std::make_tuple(int(std::floor(p.x)), int(std::floor(p.y)), int(std::floor(p.z)));
    REQUIRE(oracle.count(key) == 1);
    auto& [sx, sy, sz, n] = oracle[key];
    CHECK(p.x == doctest::Approx(sx / n).epsilon(1e-12));
    CHECK(p.y == doctest::Approx(sy / n).epsilon(1e-12));
    CHECK(p.z == doctest::Approx(sz / n).epsilon(1e-12));
  }
}

TEST_CASE("voxel_downsample drops non-finite points") {
  CloudFilterStats stats;
  const PointCloud cloud{{1, 1, 1}, {std::nan(""), 0, 0}, {0, INFINITY, 0}};
  const PointCloud out = voxel_downsample(cloud, 1.0, &stats);
  CHECK(out.size() == 1);
  CHECK(stats.dropped_nonfinite == 2);
}

TEST_CASE("project_bev normalization and conventions") {
  const BevConfig cfg = BevConfig::desk();

  const BevImage empty = project_bev({}, cfg);
  CHECK(empty.density.maxCoeff() == 0.0);
  CHECK(empty.count.maxCoeff() == 0);

  // 3 points in one cell, 1 in another
  PointCloud cloud{{1.0, 1.0, 0}, {1.01, 1.02, 0.5}, {1.05, 1.05, 1.0}, {-3.0, 2.0, 0}};
  const BevImage img = project_bev(cloud, cfg);
  CHECK(img.density.maxCoeff() == 1.0);
  int ones = 0, thirds = 0;
  for (int v = 0; v < cfg.height_px; ++v)
    for (int u = 0; u < cfg.width_px; ++u) {
      if (img.density(v, u) == 1.0) ones++;
      if (img.density(v, u) == doctest::Approx(1.0 / 3.0)) thirds++;
    }
  CHECK(ones == 1);
  CHECK(thirds == 1);

  // sensor origin maps to the image center pixel
  const BevImage center = project_bev({{0.01, 0.01, 0}}, cfg);
  CHECK(center.count(cfg.height_px / 2, cfg.width_px / 2) == 1);
}

TEST_CASE("project_bev ring oracle at reference resolution") {
  const BevConfig cfg = BevConfig::reference();
  PointCloud ring;
  const double radius = 40.0;
  for (int k = 0; k < 2000; ++k) {
    const double a = 2 * kPi * k / 2000;
    ring.push_back({radius * std::cos(a), radius * std::sin(a), 0.0});
  }
  const BevImage img = project_bev(ring, cfg);
  // every occupied pixel center must be within about a pixel of the circle
  for (int v = 0; v < cfg.height_px; ++v) {
    for (int u = 0; u < cfg.width_px; ++u) {
      if (img.count(v, u) == 0) continue;
      const Vec2 c = pixel_center_local(u, v, cfg);
      CHECK(std::abs(c.norm() - radius) <= cfg.pixel_size);
    }
  }
  CHECK((img.count.array() > 0).count() > 100);
}

TEST_CASE("build_coordinate_map matches the pixel convention") {
  const BevConfig cfg = BevConfig::desk();
  const CoordinateMap id_map = build_coordinate_map(Pose2::identity(), cfg);
  // center-of-pixel convention: the center pixel sits at +s/2
  CHECK(std::abs(id_map.gx(cfg.height_px / 2, cfg.width_px / 2)) <= cfg.pixel_size / 2 + 1e-12);
  CHECK(std::abs(id_map.gy(cfg.height_px / 2, cfg.width_px / 2)) <= cfg.pixel_size / 2 + 1e-12);

  const CoordinateMap shifted = build_coordinate_map(Pose2(100, 50, 0), cfg);
  CHECK((shifted.gx.array() - id_map.gx.array()).abs().maxCoeff() == doctest::Approx(100.0));
  CHECK((shifted.gy.array() - id_map.gy.array()).abs().maxCoeff() == doctest::Approx(50.0));

  // quarter turn: gx of the rotated map equals -gy of the identity map
  // up to the index permutation (u, v) -> (v, W-1-u)
  const CoordinateMap rot = build_coordinate_map(Pose2(0, 0, kPi / 2), cfg);
  for (int v = 0; v < cfg.height_px; v += 7) {
    for (int u = 0; u < cfg.width_px; u += 7) {
      CHECK(rot.gx(v, u) == doctest::Approx(-id_map.gy(v, u)).epsilon(1e-9));
      CHECK(rot.gy(v, u) == doctest::Approx(id_map.gx(v, u)).epsilon(1e-9));
    }
  }
}

TEST_CASE("coordinate map is consistent with projection") {
  const BevConfig cfg = BevConfig::desk();
  const Pose2 pose(12.0, -7.0, 0.8);
  const CoordinateMap map = build_coordinate_map(pose, cfg);
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const Vec2 local(rng.uniform(-7.9, 7.9), rng.uniform(-7.9, 7.9));
    const BevImage img = project_bev({{local.x(), local.y(), 0}}, cfg);
    int pu = -1, pv = -1;
    for (int v = 0; v < cfg.height_px && pu < 0; ++v)
      for (int u = 0; u < cfg.width_px; ++u)
        if (img.count(v, u) > 0) {
          pu = u;
          pv = v;
          break;
        }
    REQUIRE(pu >= 0);
    const Vec2 global = local_to_global(pose, local);
    const double err = (Vec2(map.gx(pv, pu), map.gy(pv, pu)) - global).norm();
    CHECK(err <= cfg.pixel_size / std::sqrt(2.0) + 1e-12);
  }
}

TEST_CASE("build_coordinate_map translation equivariance") {
  const BevConfig cfg = BevConfig::desk();
  const Pose2 base(3.0, 4.0, 0.6);
  const Pose2 t(10.0, -2.0, 0.0);
  const CoordinateMap a = build_coordinate_map(compose(t, base), cfg);
  const CoordinateMap b = build_coordinate_map(base, cfg);
  CHECK((a.gx.array() - (b.gx.array() + 10.0)).abs().maxCoeff() < 1e-9);
  CHECK((a.gy.array() - (b.gy.array() - 2.0)).abs().maxCoeff() < 1e-9);
}

namespace {

BevImage random_image(const BevConfig& cfg, Rng& rng, int points = 500) {
  PointCloud cloud;
  const double hx = cfg.coverage_x() / 2 * 0.95, hy = cfg.coverage_y() / 2 * 0.95;
  for (int i = 0; i < points; ++i)
    cloud.push_back({rng.uniform(-hx, hx), rng.uniform(-hy, hy), rng.uniform(0, 2)});
  return project_bev(cloud, cfg);
}

}  // namespace

TEST_CASE("augment identity is bit-identical") {
  const BevConfig cfg = BevConfig::desk();
  Rng rng(21);
  const BevImage img = random_image(cfg, rng);
  const CoordinateMap map = build_coordinate_map(Pose2(5, 6, 0.3), cfg);
  const auto [img2, map2] = augment(img, map, AugmentParams::identity());
  CHECK(img2.density == img.density);
  CHECK(img2.count == img.count);
  CHECK(map2.gx == map.gx);
  CHECK(map2.gy == map.gy);
}

TEST_CASE("augment pure translation shifts content by whole pixels") {
  const BevConfig cfg = BevConfig::reference();
  PointCloud cloud;
  for (int i = 0; i < 200; ++i) cloud.push_back({i * 0.09 - 9.0, 3.0, 0.0});
  const BevImage img = project_bev(cloud, cfg);
  const CoordinateMap map = build_coordinate_map(Pose2::identity(), cfg);
  AugmentParams params;
  params.translation_frac_x = 0.25;  // +128 px on the 512 config
  const auto [out, out_map] = augment(img, map, params);
  for (int v = 0; v < cfg.height_px; ++v) {
    for (int u = 0; u < cfg.width_px; ++u) {
      const int src = u - 128;
      const int expected = src >= 0 && src < cfg.width_px ? img.count(v, src) : 0;
      CHECK(out.count(v, u) == expected);
    }
  }
}

TEST_CASE("augment quarter rotation permutes pixels exactly") {
  const BevConfig cfg = BevConfig::desk();
  Rng rng(22);
  const BevImage img = random_image(cfg, rng);
  const CoordinateMap map = build_coordinate_map(Pose2(2, -1, 0.2), cfg);
  AugmentParams params;
  params.rotation = kPi / 2;
  const auto [out, out_map] = augment(img, map, params);
  const int n = cfg.width_px;
  // output (u, v) sources from (v, n-1-u) under a +90 deg warp about the center
  for (int v = 0; v < n; ++v) {
    for (int u = 0; u < n; ++u) {
      CHECK(out.count(v, u) == img.count(n - 1 - u, v));
      CHECK(out_map.gx(v, u) == doctest::Approx(map.gx(n - 1 - u, v)).epsilon(1e-9));
      CHECK(out_map.gy(v, u) == doctest::Approx(map.gy(n - 1 - u, v)).epsilon(1e-9));
    }
  }
}

TEST_CASE("augment coupling invariant: warped map tracks source content") {
  const BevConfig cfg = BevConfig::desk();
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const BevImage img = random_image(cfg, rng, 300);
    const Pose2 pose(rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-kPi, kPi));
    const CoordinateMap map = build_coordinate_map(pose, cfg);
    const AugmentParams params = AugmentParams::sample(rng);
    const auto [out, out_map] = augment(img, map, params);

    const Similarity2 inv = invert(augment_warp(params, cfg));
    for (int v = 0; v < cfg.height_px; ++v) {
      for (int u = 0; u < cfg.width_px; ++u) {
        if (out.count(v, u) == 0) continue;
        const Vec2 src = inv.apply(Vec2(u + 0.5, v + 0.5));
        const int su = static_cast<int>(std::floor(src.x()));
        const int sv = static_cast<int>(std::floor(src.y()));
        REQUIRE(img.count(sv, su) == out.count(v, u));
        const Vec2 original(map.gx(sv, su), map.gy(sv, su));
        const Vec2 warped(out_map.gx(v, u), out_map.gy(v, u));
        CHECK((original - warped).norm() <= 1.5 * cfg.pixel_size);
      }
    }
  }
}

TEST_CASE("augment determinism") {
  const BevConfig cfg = BevConfig::desk();
  Rng rng(24);
  const BevImage img = random_image(cfg, rng);
  const CoordinateMap map = build_coordinate_map(Pose2(1, 2, 0.5), cfg);
  AugmentParams params;
  params.translation_frac_x = 0.1;
  params.translation_frac_y = -0.2;
  params.rotation = 1.234;
  params.scale = 0.77;
  const auto [a_img, a_map] = augment(img, map, params);
  const auto [b_img, b_map] = augment(img, map, params);
  CHECK(a_img.density == b_img.density);
  CHECK(a_img.count == b_img.count);
  CHECK(a_map.gx == b_map.gx);
  CHECK(a_map.gy == b_map.gy);
}

TEST_CASE("augment params sampled within their ranges") {
  Rng rng(25);
  for (int i = 0; i < 1000; ++i) {
    const AugmentParams p = AugmentParams::sample(rng);
    CHECK(p.translation_frac_x >= -0.25);
    CHECK(p.translation_frac_x <= 0.25);
    CHECK(p.translation_frac_y >= -0.25);
    CHECK(p.translation_frac_y <= 0.25);
    CHECK(p.rotation >= 0.0);
    CHECK(p.rotation < 2 * kPi);
    CHECK(p.scale >= 0.5);
    CHECK(p.scale <= 1.5);
  }
}
