#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "bevloc/eval.hpp"
#include "bevloc/io.hpp"
#include "bevloc/rng.hpp"
#include "bevloc/synth.hpp"

using namespace bevloc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("bevloc_test_" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("lower median convention") {
  CHECK(std::isnan(lower_median({})));
  CHECK(lower_median({3.0}) == 3.0);
  CHECK(lower_median({0.1, 0.2, 0.4, 9.0}) == 0.2);
  CHECK(lower_median({9.0, 0.4, 0.2, 0.1}) == 0.2);
  CHECK(lower_median({1.0, 2.0, 3.0}) == 2.0);
}

TEST_CASE("evaluate on exact and straddling results") {
  std::vector<TrajectoryEntry> gt{{0, Pose2(1, 2, 0.5)}, {1, Pose2(3, 4, -0.2)}};
  std::vector<Pose2> ref{Pose2(0, 0, 0)};
  EvalThresholds th;

  std::vector<QueryRecord> exact{{0, Pose2(1, 2, 0.5), 8, 10, 0.0}, {1, Pose2(3, 4, -0.2), 8, 10, 0.0}};
  const EvalReport all_good = evaluate(exact, gt, ref, th);
  CHECK(all_good.sr_percent == 100.0);
  CHECK(all_good.median_te_m == 0.0);
  CHECK(all_good.median_re_deg == 0.0);

  // TE 1 m and 3 m with zero RE: exactly half succeed
  std::vector<QueryRecord> straddle{{0, Pose2(2, 2, 0.5), 8, 10, 0.0},
                                    {1, Pose2(6, 4, -0.2), 8, 10, 0.0}};
  const EvalReport half = evaluate(straddle, gt, ref, th);
  CHECK(half.sr_percent == 50.0);
  CHECK(half.median_te_m == 1.0);  // lower median of {1, 3}

  // a missing pose counts against SR but not the medians
  std::vector<QueryRecord> with_fail{{0, Pose2(1, 2, 0.5), 8, 10, 0.0}, {1, std::nullopt, 0, 10, 0.0}};
  const EvalReport failed = evaluate(with_fail, gt, ref, th);
  CHECK(failed.sr_percent == 50.0);
  CHECK(failed.produced == 1);
  CHECK(failed.median_te_m == 0.0);

  // RE straddle: 4 and 6 degrees at zero TE
  std::vector<QueryRecord> rotated{{0, Pose2(1, 2, 0.5 + deg_to_rad(4.0)), 8, 10, 0.0},
                                   {1, Pose2(3, 4, -0.2 + deg_to_rad(6.0)), 8, 10, 0.0}};
  CHECK(evaluate(rotated, gt, ref, th).sr_percent == 50.0);

  CHECK_THROWS(evaluate(exact, {{0, Pose2()}}, ref, th));
  std::vector<QueryRecord> wrong_id = exact;
  wrong_id[1].frame_id = 7;
  CHECK_THROWS(evaluate(wrong_id, gt, ref, th));
}

TEST_CASE("evaluate distance bins use the closest reference pose") {
  std::vector<Pose2> ref{Pose2(0, 0, 0), Pose2(10, 0, 0)};
  std::vector<TrajectoryEntry> gt{{0, Pose2(1, 0, 0)},    // 1 m -> bin [0,3)
                                  {1, Pose2(14, 0, 0)},   // 4 m -> bin [3,6)
                                  {2, Pose2(10, 7, 0)}};  // 7 m -> bin [6,9)
  std::vector<QueryRecord> res{{0, Pose2(1, 0, 0), 5, 5, 0.0},
                               {1, std::nullopt, 0, 5, 0.0},
                               {2, Pose2(10, 7, 0), 5, 5, 0.0}};
  const EvalReport report = evaluate(res, gt, ref, EvalThresholds{});
  REQUIRE(report.bins.size() == 3);
  CHECK(report.bins[0].count == 1);
  CHECK(report.bins[0].successes == 1);
  CHECK(report.bins[1].count == 1);
  CHECK(report.bins[1].successes == 0);
  CHECK(report.bins[2].count == 1);
  CHECK(report.bins[2].sr_percent() == 100.0);
}

TEST_CASE("evaluate agrees with a brute-force re-implementation") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(20));
    std::vector<TrajectoryEntry> gt;
    std::vector<QueryRecord> res;
    std::vector<Pose2> ref;
    for (int r = 0; r < 3; ++r) ref.emplace_back(rng.uniform(-5, 5), rng.uniform(-5, 5), 0.0);
    for (int i = 0; i < n; ++i) {
      const Pose2 truth(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-kPi, kPi));
      gt.push_back({i, truth});
      QueryRecord rec;
      rec.frame_id = i;
      if (rng.uniform() < 0.8) {
        rec.pose = Pose2(truth.x + rng.normal(0, 1.5), truth.y + rng.normal(0, 1.5),
                         truth.yaw + rng.normal(0, 0.05));
      }
      res.push_back(rec);
    }
    const EvalReport report = evaluate(res, gt, ref, EvalThresholds{});

    int successes = 0;
    std::vector<double> te, re;
    for (int i = 0; i < n; ++i) {
      if (!res[i].pose) continue;
      const double dx = res[i].pose->x - gt[i].pose.x;
      const double dy = res[i].pose->y - gt[i].pose.y;
      const double t = std::sqrt(dx * dx + dy * dy);
      const double r = std::abs(rad_to_deg(angle_diff(res[i].pose->yaw, gt[i].pose.yaw)));
      te.push_back(t);
      re.push_back(r);
      if (t < 2.0 && r < 5.0) successes++;
    }
    CHECK(report.sr_percent == doctest::Approx(100.0 * successes / n).epsilon(1e-12));
    if (!te.empty()) {
      std::sort(te.begin(), te.end());
      std::sort(re.begin(), re.end());
      // same order statistic; the compiler may contract the norms differently
      CHECK(report.median_te_m == doctest::Approx(te[(te.size() - 1) / 2]).epsilon(1e-12));
      CHECK(report.median_re_deg == doctest::Approx(re[(re.size() - 1) / 2]).epsilon(1e-12));
    }
  }
}

TEST_CASE("cloud io round trips") {
  TempDir dir;
  CHECK(read_cloud((write_cloud(dir.file("empty.xyz"), {}, CloudFormat::XyzText),
                    dir.file("empty.xyz")), CloudFormat::XyzText).empty());

  PointCloud cloud{{1.25, -2.5, 3.75}, {0.0009765625, 0.5, -1.0}, {100.0, -50.0, 0.25}};
  write_cloud(dir.file("three.bin"), cloud, CloudFormat::XyzBin);
  const PointCloud bin_back = read_cloud(dir.file("three.bin"), CloudFormat::XyzBin);
  REQUIRE(bin_back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(bin_back[i].x == cloud[i].x);  // values chosen float32-exact
    CHECK(bin_back[i].y == cloud[i].y);
    CHECK(bin_back[i].z == cloud[i].z);
  }
  // a second write is byte-identical
  write_cloud(dir.file("three2.bin"), bin_back, CloudFormat::XyzBin);
  CHECK(read_file(dir.file("three.bin")) == read_file(dir.file("three2.bin")));

  write_cloud(dir.file("three.xyz"), cloud, CloudFormat::XyzText);
  const PointCloud txt_back = read_cloud(dir.file("three.xyz"), CloudFormat::XyzText);
  REQUIRE(txt_back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(txt_back[i].x - cloud[i].x) < 1e-6);
    CHECK(std::abs(txt_back[i].y - cloud[i].y) < 1e-6);
    CHECK(std::abs(txt_back[i].z - cloud[i].z) < 1e-6);
  }

  // binary record arithmetic: n points -> 12 n bytes
  Rng rng(3);
  PointCloud big;
  for (int i = 0; i < 100000; ++i)
    big.push_back({rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(0, 3)});
  write_cloud(dir.file("big.bin"), big, CloudFormat::XyzBin);
  CHECK(fs::file_size(dir.file("big.bin")) == 12u * 100000u);

  // malformed inputs carry a location
  write_file(dir.file("bad.xyz"), "1 2 3\n4 five 6\n");
  CHECK_THROWS_WITH_AS(read_cloud(dir.file("bad.xyz"), CloudFormat::XyzText),
                       doctest::Contains(":2"), std::runtime_error);
  write_file(dir.file("bad.bin"), std::string(13, '\0'));
  CHECK_THROWS(read_cloud(dir.file("bad.bin"), CloudFormat::XyzBin));

  CHECK(cloud_format_for_path("a/b/c.xyz") == CloudFormat::XyzText);
  CHECK(cloud_format_for_path("a/b/c.bin") == CloudFormat::XyzBin);
}

TEST_CASE("trajectory io") {
  TempDir dir;
  std::vector<TrajectoryEntry> entries{{5, Pose2(1, 2, 0.25)}, {2, Pose2(-3, 0.5, 7.0)}};
  write_trajectory(dir.file("traj.txt"), entries);
  const auto back = read_trajectory(dir.file("traj.txt"));
  REQUIRE(back.size() == 2);
  CHECK(back[0].frame_id == 5);  // file order preserved, ids retained
  CHECK(back[1].frame_id == 2);
  CHECK(back[1].pose.yaw == doctest::Approx(normalize_angle(7.0)).epsilon(1e-9));

  write_file(dir.file("dup.txt"), "1 0 0 0\n1 1 1 0\n");
  CHECK_THROWS_WITH_AS(read_trajectory(dir.file("dup.txt")), doctest::Contains("duplicate"),
                       std::runtime_error);
  write_file(dir.file("bad.txt"), "1 0 0\n");
  CHECK_THROWS_WITH_AS(read_trajectory(dir.file("bad.txt")), doctest::Contains(":1"),
                       std::runtime_error);
}

TEST_CASE("landmark list io") {
  TempDir dir;
  LandmarkSet lm;
  lm.coords.resize(3, 2);
  lm.coords << 1.5, -2.25, 0.125, 3.0, -10.0, 0.5;
  write_landmarks(dir.file("lm.txt"), lm);
  const LandmarkSet back = read_landmarks(dir.file("lm.txt"));
  REQUIRE(back.size() == 3);
  CHECK((back.coords - lm.coords).cwiseAbs().maxCoeff() < 1e-6);

  write_file(dir.file("badlm.txt"), "0 1 2\n2 3 4\n");  // missing index 1
  CHECK_THROWS(read_landmarks(dir.file("badlm.txt")));
}

TEST_CASE("scene io round trip") {
  TempDir dir;
  const SceneSpec scene = generate_scene(7, "rooms");
  write_scene(dir.file("scene.txt"), scene);
  const SceneSpec back = read_scene(dir.file("scene.txt"));
  CHECK(back.extent.x() == doctest::Approx(scene.extent.x()));
  REQUIRE(back.walls.size() == scene.walls.size());
  REQUIRE(back.pillars.size() == scene.pillars.size());
  for (size_t i = 0; i < scene.walls.size(); ++i) {
    CHECK((back.walls[i].a - scene.walls[i].a).norm() < 1e-6);
    CHECK((back.walls[i].b - scene.walls[i].b).norm() < 1e-6);
  }
  CHECK(back.corners().size() == scene.corners().size());
}

TEST_CASE("results io round trip including failures") {
  TempDir dir;
  std::vector<QueryRecord> records{{0, Pose2(1.5, -2.0, 0.3), 7, 12, 0.125},
                                   {1, std::nullopt, 0, 9, 0.0},
                                   {2, Pose2(-4.0, 3.5, -1.0), 5, 8, 0.5}};
  write_results(dir.file("res.txt"), records);
  const auto back = read_results(dir.file("res.txt"));
  REQUIRE(back.size() == 3);
  CHECK(back[0].pose.has_value());
  CHECK(std::abs(back[0].pose->x - 1.5) < 1e-6);
  CHECK(std::abs(back[0].pose->yaw - 0.3) < 1e-6);
  CHECK(back[0].inliers == 7);
  CHECK(back[0].pairs == 12);
  CHECK_FALSE(back[1].pose.has_value());
  CHECK(back[1].pairs == 9);
}

TEST_CASE("pgm dump shape and payload") {
  TempDir dir;
  Eigen::MatrixXd density = Eigen::MatrixXd::Zero(4, 6);
  density(0, 0) = 1.0;
  density(3, 5) = 0.5;
  write_pgm(dir.file("img.pgm"), density);
  const std::string bytes = read_file(dir.file("img.pgm"));
  CHECK(bytes.rfind("P5\n6 4\n255\n", 0) == 0);
  CHECK(bytes.size() == std::string("P5\n6 4\n255\n").size() + 24);
  // rows are flipped north-up: (v=3, u=5) lands on the first payload row
  const size_t header = std::string("P5\n6 4\n255\n").size();
  CHECK(static_cast<unsigned char>(bytes[header + 5]) == 128);
  CHECK(static_cast<unsigned char>(bytes[header + 18]) == 255);
}

TEST_CASE("bundle serialization is bit-exact and validates") {
  ModelConfig mc;
  mc.input_h = mc.input_w = 16;
  mc.d_p = 2;
  mc.landmark_count = 4;
  mc.base_channels = 4;
  mc.max_channels = 8;
  mc.depth = 2;
  mc.seed = 31;
  Bundle bundle(BevConfig{16, 16, 0.5, 0.1}, mc);
  Rng rng(1);
  for (int j = 0; j < 4; ++j)
    bundle.model.landmarks().row(j) = Vec2(rng.uniform(-9, 9), rng.uniform(-9, 9)).transpose();

  const std::string once = serialize_bundle(bundle);
  Bundle loaded = deserialize_bundle(once);
  CHECK(loaded.model.config() == mc);
  CHECK(loaded.bev == bundle.bev);
  const std::string twice = serialize_bundle(loaded);
  CHECK(once == twice);  // float32 quantization is idempotent

  // inference equivalence after a round trip
  BevImage img;
  img.config = loaded.bev;
  img.density = Eigen::MatrixXd::Zero(16, 16);
  img.count = Eigen::MatrixXi::Zero(16, 16);
  img.density(7, 7) = 1.0;
  img.count(7, 7) = 2;
  const ForwardOutput a = loaded.model.forward(img);
  const ForwardOutput b = deserialize_bundle(twice).model.forward(img);
  CHECK(a.heatmap == b.heatmap);
  CHECK(a.corr == b.corr);

  // tampering is rejected
  std::string bad_magic = once;
  bad_magic[0] = 'X';
  CHECK_THROWS(deserialize_bundle(bad_magic));
  std::string bad_version = once;
  bad_version[4] = 9;
  CHECK_THROWS_WITH_AS(deserialize_bundle(bad_version), doctest::Contains("version"),
                       std::runtime_error);
  CHECK_THROWS(deserialize_bundle(once.substr(0, once.size() - 3)));  // truncated
}

TEST_CASE("eval report text is deterministic") {
  std::vector<TrajectoryEntry> gt{{0, Pose2(1, 2, 0.5)}};
  std::vector<QueryRecord> res{{0, Pose2(1, 2, 0.5), 8, 10, 0.0}};
  const EvalReport report = evaluate(res, gt, {Pose2(0, 0, 0)}, EvalThresholds{});
  const std::string a = format_eval_report(report);
  const std::string b = format_eval_report(report);
  CHECK(a == b);
  CHECK(a.find("sr_percent 100.00") != std::string::npos);
  CHECK(a.find("sr_by_distance_bin") != std::string::npos);
}
