#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bevloc/bev.hpp"
#include "bevloc/eval.hpp"
#include "bevloc/landmarks.hpp"
#include "bevloc/model.hpp"
#include "bevloc/synth.hpp"
#include "bevloc/trainer.hpp"

namespace bevloc {

enum class CloudFormat { XyzText, XyzBin };

/// Pick a format from a file name: .xyz is text, .bin / .xyzb binary.
CloudFormat cloud_format_for_path(const std::string& path);

PointCloud read_cloud(const std::string& path, CloudFormat format);
void write_cloud(const std::string& path, const PointCloud& cloud, CloudFormat format);

/// Text lines "frame_id x y yaw_rad". Yaw is normalized on load; duplicate
/// frame ids are rejected; file order is preserved.
std::vector<TrajectoryEntry> read_trajectory(const std::string& path);
void write_trajectory(const std::string& path, const std::vector<TrajectoryEntry>& entries);

/// Text lines "index x y", meters with 6 decimals, indices 0..L-1.
LandmarkSet read_landmarks(const std::string& path);
void write_landmarks(const std::string& path, const LandmarkSet& landmarks);

/// Plain-text scene file with EXTENT, SEGMENTS (x1 y1 x2 y2) and
/// PILLARS (cx cy r) sections.
SceneSpec read_scene(const std::string& path);
void write_scene(const std::string& path, const SceneSpec& scene);

/// 8-bit binary PGM of a density raster (values x255, rounded). Rows are
/// written north-up: image row 0 is the highest y.
void write_pgm(const std::string& path, const Eigen::MatrixXd& density);

/// Result records, one line per query:
/// "frame_id status x y yaw_deg inliers pairs rms" with status ok|fail.
void write_results(const std::string& path, const std::vector<QueryRecord>& records);
std::vector<QueryRecord> read_results(const std::string& path);

std::string format_eval_report(const EvalReport& report);

/// Bundle serialization. Layout (all little-endian):
///   magic "BSLD", u32 version (=1)
///   config block: u32 input_h, input_w, d_p, base_channels, max_channels,
///     depth; f64 leaky_slope, ln_eps; u64 seed; u32 bev_width_px,
///     bev_height_px; f64 pixel_size, voxel_size
///   u32 landmark count L, then L x 2 f32 (x, y)
///   named tensors until EOF: u16 name length, name bytes, u8 rank,
///     u32 dims[rank], f32 data row-major
/// Unknown magic or version is rejected.
std::string serialize_bundle(const Bundle& bundle);
Bundle deserialize_bundle(const std::string& bytes);
void write_bundle(const std::string& path, const Bundle& bundle);
Bundle read_bundle(const std::string& path);

/// Checkpoint: a bundle plus the exact optimizer state (double-precision
/// parameters, momentum, best snapshot, rng stream), enough to resume
/// bit-for-bit.
struct Checkpoint {
  std::string bundle_bytes;
  TrainConfig train;
  TrainerState state;
  std::vector<Eigen::MatrixXd> params;  // full-precision current parameters
};

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace bevloc
