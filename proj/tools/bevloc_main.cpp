// Command-line frontend for the bevloc library: synthetic data generation,
// BEV inspection, landmark initialization, training, localization and
// evaluation.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "bevloc/eval.hpp"
#include "bevloc/io.hpp"
#include "bevloc/localizer.hpp"
#include "bevloc/loss.hpp"
#include "bevloc/model.hpp"
#include "bevloc/synth.hpp"
#include "bevloc/trainer.hpp"

namespace fs = std::filesystem;
using namespace bevloc;

namespace {

struct BevFlags {
  int width = 64;
  int height = 64;
  double pixel_size = 0.25;
  double voxel_size = 0.1;

  BevConfig config() const { return BevConfig{width, height, pixel_size, voxel_size}; }

  void attach(CLI::App* cmd) {
    cmd->add_option("--width", width, "BEV raster width in pixels");
    cmd->add_option("--height", height, "BEV raster height in pixels");
    cmd->add_option("--pixel-size", pixel_size, "meters per pixel");
    cmd->add_option("--voxel-size", voxel_size, "voxel filter size in meters");
  }
};

std::string frame_name(int64_t id, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06lld%s", static_cast<long long>(id), ext);
  return buf;
}

std::vector<TrajectoryEntry> poses_to_entries(const std::vector<Pose2>& poses) {
  std::vector<TrajectoryEntry> entries;
  entries.reserve(poses.size());
  for (size_t i = 0; i < poses.size(); ++i) entries.push_back({static_cast<int64_t>(i), poses[i]});
  return entries;
}

// Query poses near / far from the reference trajectory, clearance-checked.
std::vector<TrajectoryEntry> sample_queries(const SceneSpec& scene, const std::vector<Pose2>& traj,
                                            int count, double dist_min, double dist_max, Rng& rng) {
  std::vector<TrajectoryEntry> queries;
  int attempts = 0;
  while (static_cast<int>(queries.size()) < count) {
    if (++attempts > 100000)
      throw std::runtime_error("query sampling failed; scene too constrained");
    const Pose2& anchor = traj[rng.uniform_int(traj.size())];
    const double angle = rng.uniform(0.0, 2.0 * kPi);
    const double radius = rng.uniform(dist_min, dist_max);
    const Vec2 p = anchor.translation() + radius * Vec2(std::cos(angle), std::sin(angle));
    if (p.x() < 1.0 || p.x() > scene.extent.x() - 1.0 || p.y() < 1.0 ||
        p.y() > scene.extent.y() - 1.0)
      continue;
    if (scene.clearance(p) < 0.5) continue;
    double dist = std::numeric_limits<double>::infinity();
    for (const Pose2& t : traj) dist = std::min(dist, (p - t.translation()).norm());
    if (dist < dist_min || dist > dist_max) continue;
    const double yaw = rng.uniform(-kPi, kPi);
    queries.push_back({static_cast<int64_t>(queries.size()), Pose2(p.x(), p.y(), yaw)});
  }
  return queries;
}

void write_scan_set(const fs::path& dir, const SceneSpec& scene,
                    const std::vector<TrajectoryEntry>& entries, const SensorSpec& sensor,
                    uint64_t seed_base, CloudFormat format) {
  fs::create_directories(dir);
  const char* ext = format == CloudFormat::XyzBin ? ".bin" : ".xyz";
  for (const auto& e : entries) {
    const PointCloud cloud = simulate_scan(scene, e.pose, sensor, seed_base + e.frame_id);
    write_cloud((dir / frame_name(e.frame_id, ext)).string(), cloud, format);
  }
}

std::vector<std::pair<int64_t, fs::path>> list_scans(const fs::path& dir) {
  std::vector<std::pair<int64_t, fs::path>> scans;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string stem = entry.path().stem().string();
    try {
      scans.emplace_back(std::stoll(stem), entry.path());
    } catch (const std::exception&) {
      // not a frame file; skip
    }
  }
  std::sort(scans.begin(), scans.end());
  return scans;
}

std::vector<TrainFrame> load_training_frames(const std::string& data_dir, const BevConfig& bev,
                                             double keyframe_separation) {
  const fs::path dir(data_dir);
  auto traj = read_trajectory((dir / "trajectory.txt").string());
  traj = keyframe_select(traj, keyframe_separation);
  std::vector<TrainFrame> frames;
  frames.reserve(traj.size());
  for (const auto& e : traj) {
    fs::path scan = dir / "scans" / frame_name(e.frame_id, ".xyz");
    if (!fs::exists(scan)) scan = dir / "scans" / frame_name(e.frame_id, ".bin");
    if (!fs::exists(scan))
      throw std::runtime_error("missing scan for frame " + std::to_string(e.frame_id));
    const PointCloud cloud = read_cloud(scan.string(), cloud_format_for_path(scan.string()));
    frames.push_back(make_train_frame(e.frame_id, e.pose, cloud, bev));
  }
  return frames;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Self-supervised scene-landmark localization on BEV density images"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a synthetic scene, trajectory and scans");
  std::string synth_preset = "rooms", synth_out;
  uint64_t synth_seed = 0;
  double synth_spacing = 0.5;
  int near_queries = 0, far_queries = 0;
  double near_max = 2.0, far_min = 8.0, far_max = 12.0;
  SensorSpec sensor;
  bool synth_binary = false;
  synth->add_option("--preset", synth_preset, "rooms | campus | pillars");
  synth->add_option("--seed", synth_seed, "scene + scan seed")->required();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--spacing", synth_spacing, "trajectory sample spacing in meters");
  synth->add_option("--near-queries", near_queries, "query scans close to the trajectory");
  synth->add_option("--far-queries", far_queries, "query scans far off the trajectory");
  synth->add_option("--near-max", near_max, "max distance of near queries");
  synth->add_option("--far-min", far_min, "min distance of far queries");
  synth->add_option("--far-max", far_max, "max distance of far queries");
  synth->add_option("--beams", sensor.beams, "beams per revolution");
  synth->add_option("--max-range", sensor.max_range, "sensor range in meters");
  synth->add_option("--noise", sensor.noise_sigma, "range noise sigma in meters");
  synth->add_flag("--binary", synth_binary, "write xyz-bin scans instead of text");

  // ---- bev ----
  auto* bev_cmd = app.add_subcommand("bev", "rasterize a point cloud and dump the density image");
  std::string bev_cloud, bev_out;
  BevFlags bev_flags;
  bev_cmd->add_option("--cloud", bev_cloud, "input point cloud")->required();
  bev_cmd->add_option("--out", bev_out, "output PGM file")->required();
  bev_flags.attach(bev_cmd);

  // ---- init-landmarks ----
  auto* init_cmd = app.add_subcommand("init-landmarks", "initialize the landmark set from a trajectory");
  std::string init_traj, init_out;
  int init_dp = 4;
  double init_rho = 0.2;
  double init_sep = 0.5;
  BevFlags init_bev;
  init_cmd->add_option("--trajectory", init_traj)->required();
  init_cmd->add_option("--out", init_out)->required();
  init_cmd->add_option("--d-p", init_dp, "patches per image side");
  init_cmd->add_option("--rho", init_rho, "landmark density");
  init_cmd->add_option("--keyframe-separation", init_sep);
  init_bev.attach(init_cmd);

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "train a bundle on a reference dataset");
  std::string train_data, train_out, train_report_path, train_log_path;
  std::string checkpoint_path, resume_path;
  int checkpoint_every = 0;
  BevFlags train_bev;
  TrainConfig tc;
  int arch_dp = 4, arch_base = 16, arch_max = 32, arch_depth = 3;
  double train_rho = 0.2;
  double train_sep = 0.5;
  train_cmd->add_option("--data", train_data, "dataset directory (trajectory.txt + scans/)")->required();
  train_cmd->add_option("--out", train_out, "output bundle file")->required();
  train_cmd->add_option("--report", train_report_path, "JSON training summary");
  train_cmd->add_option("--log", train_log_path, "per-epoch log file");
  train_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file to maintain");
  train_cmd->add_option("--checkpoint-every", checkpoint_every, "checkpoint interval in epochs");
  train_cmd->add_option("--resume", resume_path, "resume from a checkpoint file");
  train_cmd->add_option("--epochs", tc.epochs);
  train_cmd->add_option("--seed", tc.seed)->required();
  train_cmd->add_option("--lr-initial", tc.lr_initial);
  train_cmd->add_option("--lr-final", tc.lr_final);
  train_cmd->add_option("--momentum", tc.momentum);
  train_cmd->add_option("--val-fraction", tc.val_fraction);
  train_cmd->add_flag("--freeze-landmarks", tc.freeze_landmarks, "keep the initial landmarks fixed");
  train_cmd->add_option("--alpha", tc.loss.alpha);
  train_cmd->add_option("--beta", tc.loss.beta);
  train_cmd->add_option("--gamma", tc.loss.gamma);
  train_cmd->add_option("--d-p", arch_dp);
  train_cmd->add_option("--base-channels", arch_base);
  train_cmd->add_option("--max-channels", arch_max);
  train_cmd->add_option("--depth", arch_depth);
  train_cmd->add_option("--rho", train_rho, "landmark density");
  train_cmd->add_option("--keyframe-separation", train_sep);
  train_bev.attach(train_cmd);

  // ---- localize ----
  auto* loc_cmd = app.add_subcommand("localize", "localize one or many scans against a bundle");
  std::string loc_bundle, loc_cloud, loc_scans, loc_out;
  LocalizerConfig lc;
  loc_cmd->add_option("--bundle", loc_bundle)->required();
  loc_cmd->add_option("--cloud", loc_cloud, "single query cloud");
  loc_cmd->add_option("--scans", loc_scans, "directory of query clouds");
  loc_cmd->add_option("--out", loc_out, "result record file (stdout if omitted)");
  loc_cmd->add_option("--seed", lc.seed)->required();
  loc_cmd->add_option("--max-peaks", lc.max_peaks);
  loc_cmd->add_option("--min-peak-distance", lc.min_peak_distance);
  loc_cmd->add_option("--peak-threshold", lc.peak_threshold_ratio);
  loc_cmd->add_option("--ransac-iterations", lc.ransac_iterations);
  loc_cmd->add_option("--inlier-threshold", lc.inlier_threshold);
  loc_cmd->add_option("--min-inliers", lc.min_inliers);
  bool loc_no_refine = false;
  loc_cmd->add_flag("--no-refine", loc_no_refine, "skip least-squares refinement");

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "score localization results against ground truth");
  std::string eval_results, eval_gt, eval_ref, eval_out;
  EvalThresholds thresholds;
  eval_cmd->add_option("--results", eval_results)->required();
  eval_cmd->add_option("--gt", eval_gt, "ground-truth trajectory for the queries")->required();
  eval_cmd->add_option("--ref", eval_ref, "reference trajectory for distance bins");
  eval_cmd->add_option("--out", eval_out, "report file (stdout if omitted)");
  eval_cmd->add_option("--te-max", thresholds.te_max_m);
  eval_cmd->add_option("--re-max", thresholds.re_max_deg);

  // ---- inspect-bundle ----
  auto* inspect_cmd = app.add_subcommand("inspect-bundle", "print bundle statistics");
  std::string inspect_bundle;
  inspect_cmd->add_option("--bundle", inspect_bundle)->required();

  // ---- demo-transfer ----
  auto* demo_cmd = app.add_subcommand("demo-transfer",
                                      "run a bundle's heatmap branch on a foreign scan (qualitative)");
  std::string demo_bundle, demo_cloud, demo_prefix;
  demo_cmd->add_option("--bundle", demo_bundle)->required();
  demo_cmd->add_option("--cloud", demo_cloud)->required();
  demo_cmd->add_option("--out-prefix", demo_prefix)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints the message / usage text
    return code == 0 ? 0 : 2;
  }
  lc.refine = !loc_no_refine;

  if (synth->parsed()) {
    const SceneSpec scene = generate_scene(synth_seed, synth_preset);
    const auto traj = generate_trajectory(scene, synth_spacing);
    const fs::path out(synth_out);
    fs::create_directories(out);
    write_scene((out / "scene.txt").string(), scene);
    const auto entries = poses_to_entries(traj);
    write_trajectory((out / "trajectory.txt").string(), entries);
    const CloudFormat format = synth_binary ? CloudFormat::XyzBin : CloudFormat::XyzText;
    write_scan_set(out / "scans", scene, entries, sensor, synth_seed * 1000003, format);
    Rng rng(synth_seed ^ 0x9e3779b97f4a7c15ull);
    if (near_queries > 0) {
      const auto queries = sample_queries(scene, traj, near_queries, 0.0, near_max, rng);
      write_trajectory((out / "queries_near_gt.txt").string(), queries);
      write_scan_set(out / "queries_near", scene, queries, sensor, synth_seed * 2000003, format);
    }
    if (far_queries > 0) {
      const auto queries = sample_queries(scene, traj, far_queries, far_min, far_max, rng);
      write_trajectory((out / "queries_far_gt.txt").string(), queries);
      write_scan_set(out / "queries_far", scene, queries, sensor, synth_seed * 3000017, format);
    }
    std::cout << "scene '" << synth_preset << "' with " << scene.walls.size() << " walls, "
              << scene.pillars.size() << " pillars, " << scene.corners().size() << " corners; "
              << traj.size() << " trajectory poses\n";
    return 0;
  }

  if (bev_cmd->parsed()) {
    const PointCloud cloud = read_cloud(bev_cloud, cloud_format_for_path(bev_cloud));
    CloudFilterStats stats;
    const BevImage image =
        project_bev(voxel_downsample(cloud, bev_flags.config().voxel_size, &stats),
                    bev_flags.config(), &stats);
    if (stats.dropped_nonfinite > 0)
      std::cerr << "warning: dropped " << stats.dropped_nonfinite << " non-finite points\n";
    write_pgm(bev_out, image.density);
    std::cout << "occupied pixels: " << (image.count.array() > 0).count() << ", max count "
              << image.count.maxCoeff() << "\n";
    return 0;
  }

  if (init_cmd->parsed()) {
    const auto traj = keyframe_select(read_trajectory(init_traj), init_sep);
    std::vector<Pose2> poses;
    poses.reserve(traj.size());
    for (const auto& e : traj) poses.push_back(e.pose);
    LandmarkInitConfig cfg;
    cfg.d_p = init_dp;
    cfg.rho_lm = init_rho;
    const LandmarkSet lm = init_landmarks(poses, init_bev.config(), cfg);
    write_landmarks(init_out, lm);
    std::cout << "initialized " << lm.size() << " landmarks (s_grid "
              << cfg.s_grid(init_bev.config()) << " m)\n";
    return 0;
  }

  if (train_cmd->parsed()) {
    BevConfig bev = train_bev.config();
    ModelConfig arch;
    std::optional<Checkpoint> resume;
    if (!resume_path.empty()) {
      resume = read_checkpoint(resume_path);
      const Bundle embedded = deserialize_bundle(resume->bundle_bytes);
      bev = embedded.bev;
      arch = embedded.model.config();
      tc = resume->train;
      arch_dp = arch.d_p;
    } else {
      arch.input_h = bev.height_px;
      arch.input_w = bev.width_px;
      arch.d_p = arch_dp;
      arch.base_channels = arch_base;
      arch.max_channels = arch_max;
      arch.depth = arch_depth;
      arch.seed = tc.seed;
      tc.loss.d_p = arch_dp;
    }

    const auto frames = load_training_frames(train_data, bev, train_sep);
    std::vector<Pose2> poses;
    poses.reserve(frames.size());
    for (const auto& f : frames) poses.push_back(f.pose);
    LandmarkInitConfig init_cfg;
    init_cfg.d_p = arch_dp;
    init_cfg.rho_lm = train_rho;
    const LandmarkSet lm = init_landmarks(poses, bev, init_cfg);
    arch.landmark_count = lm.size();

    std::ofstream log_stream;
    std::ostream* log = nullptr;
    if (!train_log_path.empty()) {
      log_stream.open(train_log_path, resume ? std::ios::app : std::ios::out);
      log = &log_stream;
    }

    Model model(arch);
    model.landmarks() = lm.coords;
    Trainer trainer(model, frames, tc);
    if (resume) {
      auto& entries = model.params().entries;
      if (resume->params.size() != entries.size())
        throw std::runtime_error("resume: checkpoint does not match this dataset/architecture");
      for (size_t i = 0; i < entries.size(); ++i) *entries[i].value = resume->params[i];
      trainer.restore_state(resume->state);
      std::cout << "resuming at epoch " << resume->state.next_epoch << "\n";
    } else {
      std::cout << "training on " << frames.size() << " keyframes with " << lm.size()
                << " landmarks\n";
    }

    auto save_checkpoint_now = [&] {
      Checkpoint cp;
      Bundle snapshot(bev, arch);
      auto& entries = model.params().entries;
      for (size_t i = 0; i < entries.size(); ++i)
        *snapshot.model.params().entries[i].value = *entries[i].value;
      cp.bundle_bytes = serialize_bundle(snapshot);
      cp.train = tc;
      cp.state = trainer.capture_state();
      for (const auto& e : entries) cp.params.push_back(*e.value);
      write_checkpoint(checkpoint_path, cp);
    };

    TrainReport report;
    if (!checkpoint_path.empty() && checkpoint_every > 0) {
      int next = resume ? resume->state.next_epoch : 0;
      while (next < tc.epochs) {
        next = std::min(next + checkpoint_every, tc.epochs);
        report = trainer.run(log, next);
        if (report.diverged) break;
        save_checkpoint_now();
      }
    } else {
      report = trainer.run(log);
      if (!checkpoint_path.empty()) save_checkpoint_now();
    }

    TrainResult result{Bundle(bev, arch), report};
    load_param_snapshot(trainer.best_params(), result.bundle.model);
    write_bundle(train_out, result.bundle);
    if (result.report.diverged) {
      std::cerr << "error: training diverged; wrote the last-good (best validation) bundle\n";
      return 1;
    }
    if (!train_report_path.empty()) {
      const TrainReport& r = result.report;
      std::ostringstream js;
      js.precision(10);
      js << "{\n"
         << "  \"epochs\": " << r.epochs.size() << ",\n"
         << "  \"best_epoch\": " << r.best_epoch << ",\n"
         << "  \"best_val\": " << r.best_val << ",\n"
         << "  \"landmarks\": " << r.landmark_count << ",\n"
         << "  \"lambda_mean_displacement\": " << r.lambda_mean_displacement << ",\n"
         << "  \"lambda_max_displacement\": " << r.lambda_max_displacement << ",\n"
         << "  \"lambda_moved_fraction\": " << r.lambda_moved_fraction << ",\n"
         << "  \"lambda_min_pairwise\": " << r.lambda_min_pairwise << ",\n"
         << "  \"final_train_loss\": " << (r.epochs.empty() ? 0.0 : r.epochs.back().train_loss)
         << ",\n"
         << "  \"diverged\": " << (r.diverged ? "true" : "false") << "\n}\n";
      write_file(train_report_path, js.str());
    }
    std::cout << "best validation loss " << result.report.best_val << " at epoch "
              << result.report.best_epoch << "\n";
    return 0;
  }

  if (loc_cmd->parsed()) {
    const Bundle bundle = read_bundle(loc_bundle);
    std::vector<QueryRecord> records;
    if (!loc_cloud.empty()) {
      const PointCloud cloud = read_cloud(loc_cloud, cloud_format_for_path(loc_cloud));
      const LocalizationResult res = localize(cloud, bundle, lc);
      QueryRecord rec{0, res.pose, res.inliers(), res.total_pairs, res.rms};
      records.push_back(rec);
    } else if (!loc_scans.empty()) {
      for (const auto& [id, path] : list_scans(loc_scans)) {
        LocalizerConfig per_query = lc;
        per_query.seed = lc.seed + static_cast<uint64_t>(id);
        const PointCloud cloud = read_cloud(path.string(), cloud_format_for_path(path.string()));
        const LocalizationResult res = localize(cloud, bundle, per_query);
        records.push_back({id, res.pose, res.inliers(), res.total_pairs, res.rms});
      }
    } else {
      std::cerr << "localize: need --cloud or --scans\n";
      return 2;
    }
    if (loc_out.empty()) {
      for (const QueryRecord& r : records) {
        if (r.pose)
          std::cout << r.frame_id << " ok " << r.pose->x << " " << r.pose->y << " "
                    << rad_to_deg(r.pose->yaw) << " " << r.inliers << " " << r.pairs << " " << r.rms
                    << "\n";
        else
          std::cout << r.frame_id << " fail nan nan nan " << r.inliers << " " << r.pairs << " nan\n";
      }
    } else {
      write_results(loc_out, records);
    }
    return 0;
  }

  if (eval_cmd->parsed()) {
    const auto records = read_results(eval_results);
    const auto gt = read_trajectory(eval_gt);
    std::vector<Pose2> ref;
    if (!eval_ref.empty()) {
      for (const auto& e : read_trajectory(eval_ref)) ref.push_back(e.pose);
    }
    const EvalReport report = evaluate(records, gt, ref, thresholds);
    const std::string text = format_eval_report(report);
    if (eval_out.empty())
      std::cout << text;
    else
      write_file(eval_out, text);
    return 0;
  }

  if (inspect_cmd->parsed()) {
    const Bundle bundle = read_bundle(inspect_bundle);
    const Eigen::MatrixXd& lm = bundle.model.landmarks();
    double min_pair = std::numeric_limits<double>::infinity();
    for (Eigen::Index a = 0; a < lm.rows(); ++a)
      for (Eigen::Index b = a + 1; b < lm.rows(); ++b)
        min_pair = std::min(min_pair, (lm.row(a) - lm.row(b)).norm());
    const ModelConfig& mc = bundle.model.config();
    std::cout << "input " << mc.input_h << "x" << mc.input_w << ", patch grid " << mc.d_p << "x"
              << mc.d_p << ", depth " << mc.depth << ", channels " << mc.base_channels << ".."
              << mc.max_channels << "\n";
    std::cout << "landmarks " << lm.rows() << "\n";
    std::cout << "parameters " << bundle.model.param_count() << "\n";
    std::cout << "bev " << bundle.bev.width_px << "x" << bundle.bev.height_px << " @ "
              << bundle.bev.pixel_size << " m/px, voxel " << bundle.bev.voxel_size << " m\n";
    if (lm.rows() > 0) {
      std::cout << "landmark bbox x [" << lm.col(0).minCoeff() << ", " << lm.col(0).maxCoeff()
                << "] y [" << lm.col(1).minCoeff() << ", " << lm.col(1).maxCoeff() << "]\n";
      if (std::isfinite(min_pair)) std::cout << "min pairwise distance " << min_pair << " m\n";
    }
    return 0;
  }

  if (demo_cmd->parsed()) {
    const Bundle bundle = read_bundle(demo_bundle);
    const PointCloud cloud = read_cloud(demo_cloud, cloud_format_for_path(demo_cloud));
    const BevImage image =
        project_bev(voxel_downsample(cloud, bundle.bev.voxel_size), bundle.bev);
    const ForwardOutput out = bundle.model.forward(image);
    // normalize the raw scores for the dump
    const double lo = out.heatmap.minCoeff(), hi = out.heatmap.maxCoeff();
    Eigen::MatrixXd normalized = (out.heatmap.array() - lo) / std::max(hi - lo, 1e-12);
    write_pgm(demo_prefix + "_heatmap.pgm", normalized);
    write_pgm(demo_prefix + "_bev.pgm", image.density);
    LocalizerConfig pc;
    const auto peaks = detect_peaks(out.heatmap, pc);
    std::cout << "peaks (u v score local_x local_y):\n";
    for (const Peak& p : peaks) {
      const Vec2 l = pixel_to_local(p.u, p.v, bundle.bev);
      std::cout << p.u << " " << p.v << " " << p.score << " " << l.x() << " " << l.y() << "\n";
    }
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
