#include "bevloc/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace bevloc {

namespace {

[[noreturn]] void fail(const std::string& what) { throw std::runtime_error(what); }

// ---- little-endian byte packing ----

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}
void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}
void put_f64(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

struct Reader {
  const std::string& bytes;
  size_t pos = 0;

  void need(size_t n, const char* what) const {
    if (pos + n > bytes.size())
      fail(std::string("truncated data while reading ") + what + " at byte offset " +
           std::to_string(pos));
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<uint8_t>(bytes[pos++]);
  }
  uint16_t u16(const char* what) {
    need(2, what);
    uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<uint16_t>(static_cast<uint8_t>(bytes[pos + i])) << (8 * i);
    pos += 2;
    return v;
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(bytes[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  float f32(const char* what) {
    const uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64(const char* what) {
    const uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str(size_t n, const char* what) {
    need(n, what);
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
  bool eof() const { return pos >= bytes.size(); }
};

void put_matrix_f64(std::string& out, const Eigen::MatrixXd& m) {
  put_u32(out, static_cast<uint32_t>(m.rows()));
  put_u32(out, static_cast<uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
}

Eigen::MatrixXd get_matrix_f64(Reader& in, const char* what) {
  const uint32_t rows = in.u32(what);
  const uint32_t cols = in.u32(what);
  Eigen::MatrixXd m(rows, cols);
  for (uint32_t r = 0; r < rows; ++r)
    for (uint32_t c = 0; c < cols; ++c) m(r, c) = in.f64(what);
  return m;
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail("write failed for '" + path + "'");
}

CloudFormat cloud_format_for_path(const std::string& path) {
  const auto dot = path.find_last_of('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  if (ext == ".bin" || ext == ".xyzb") return CloudFormat::XyzBin;
  return CloudFormat::XyzText;
}

PointCloud read_cloud(const std::string& path, CloudFormat format) {
  PointCloud cloud;
  if (format == CloudFormat::XyzText) {
    std::ifstream in(path);
    if (!in) fail("cannot open '" + path + "' for reading");
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::istringstream ls(line);
      Point3 p;
      std::string extra;
      if (!(ls >> p.x >> p.y >> p.z) || (ls >> extra))
        fail(path + ":" + std::to_string(line_no) + ": expected 'x y z'");
      cloud.push_back(p);
    }
  } else {
    const std::string bytes = read_file(path);
    if (bytes.size() % 12 != 0)
      fail(path + ": truncated record at byte offset " + std::to_string(bytes.size() / 12 * 12));
    Reader in{bytes};
    while (!in.eof()) {
      Point3 p;
      p.x = in.f32("point x");
      p.y = in.f32("point y");
      p.z = in.f32("point z");
      cloud.push_back(p);
    }
  }
  return cloud;
}

void write_cloud(const std::string& path, const PointCloud& cloud, CloudFormat format) {
  if (format == CloudFormat::XyzText) {
    std::ostringstream out;
    char buf[128];
    for (const Point3& p : cloud) {
      std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f\n", p.x, p.y, p.z);
      out << buf;
    }
    write_file(path, out.str());
  } else {
    std::string bytes;
    bytes.reserve(cloud.size() * 12);
    for (const Point3& p : cloud) {
      put_f32(bytes, static_cast<float>(p.x));
      put_f32(bytes, static_cast<float>(p.y));
      put_f32(bytes, static_cast<float>(p.z));
    }
    write_file(path, bytes);
  }
}

std::vector<TrajectoryEntry> read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open '" + path + "' for reading");
  std::vector<TrajectoryEntry> entries;
  std::set<int64_t> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    int64_t id = 0;
    double x = 0, y = 0, yaw = 0;
    std::string extra;
    if (!(ls >> id >> x >> y >> yaw) || (ls >> extra))
      fail(path + ":" + std::to_string(line_no) + ": expected 'frame_id x y yaw_rad'");
    if (!seen.insert(id).second)
      fail(path + ":" + std::to_string(line_no) + ": duplicate frame id " + std::to_string(id));
    entries.push_back({id, Pose2(x, y, yaw)});
  }
  return entries;
}

void write_trajectory(const std::string& path, const std::vector<TrajectoryEntry>& entries) {
  std::ostringstream out;
  char buf[160];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%lld %.9f %.9f %.9f\n", static_cast<long long>(e.frame_id),
                  e.pose.x, e.pose.y, e.pose.yaw);
    out << buf;
  }
  write_file(path, out.str());
}

LandmarkSet read_landmarks(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open '" + path + "' for reading");
  std::vector<std::pair<int, Vec2>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    int index = 0;
    double x = 0, y = 0;
    std::string extra;
    if (!(ls >> index >> x >> y) || (ls >> extra))
      fail(path + ":" + std::to_string(line_no) + ": expected 'index x y'");
    rows.emplace_back(index, Vec2(x, y));
  }
  LandmarkSet lm;
  lm.coords.resize(static_cast<Eigen::Index>(rows.size()), 2);
  std::vector<bool> filled(rows.size(), false);
  for (const auto& [index, p] : rows) {
    if (index < 0 || index >= static_cast<int>(rows.size()) || filled[index])
      fail(path + ": landmark indices must be a permutation of 0.." + std::to_string(rows.size() - 1));
    lm.coords.row(index) = p.transpose();
    filled[index] = true;
  }
  return lm;
}

void write_landmarks(const std::string& path, const LandmarkSet& landmarks) {
  std::ostringstream out;
  char buf[128];
  for (int j = 0; j < landmarks.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%d %.6f %.6f\n", j, landmarks.coords(j, 0), landmarks.coords(j, 1));
    out << buf;
  }
  write_file(path, out.str());
}

SceneSpec read_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open '" + path + "' for reading");
  SceneSpec scene;
  scene.extent = Vec2(0, 0);
  bool have_extent = false;
  enum class Section { None, Segments, Pillars } section = Section::None;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string head;
    ls >> head;
    if (head == "EXTENT") {
      double ex = 0, ey = 0;
      if (!(ls >> ex >> ey)) {
        std::getline(in, line);
        ++line_no;
        std::istringstream ls2(line);
        if (!(ls2 >> ex >> ey)) fail(path + ":" + std::to_string(line_no) + ": bad EXTENT");
      }
      scene.extent = Vec2(ex, ey);
      have_extent = true;
      continue;
    }
    if (head == "SEGMENTS") {
      section = Section::Segments;
      continue;
    }
    if (head == "PILLARS") {
      section = Section::Pillars;
      continue;
    }
    std::istringstream row(line);
    if (section == Section::Segments) {
      Segment s;
      if (!(row >> s.a.x() >> s.a.y() >> s.b.x() >> s.b.y()))
        fail(path + ":" + std::to_string(line_no) + ": expected 'x1 y1 x2 y2'");
      scene.walls.push_back(s);
    } else if (section == Section::Pillars) {
      Pillar p;
      if (!(row >> p.center.x() >> p.center.y() >> p.radius))
        fail(path + ":" + std::to_string(line_no) + ": expected 'cx cy r'");
      scene.pillars.push_back(p);
    } else {
      fail(path + ":" + std::to_string(line_no) + ": data before a section header");
    }
  }
  if (!have_extent) {
    // legacy files: fall back to the geometry bounding box
    double ex = 0, ey = 0;
    for (const Segment& s : scene.walls) {
      ex = std::max({ex, s.a.x(), s.b.x()});
      ey = std::max({ey, s.a.y(), s.b.y()});
    }
    for (const Pillar& p : scene.pillars) {
      ex = std::max(ex, p.center.x() + p.radius);
      ey = std::max(ey, p.center.y() + p.radius);
    }
    scene.extent = Vec2(ex, ey);
  }
  return scene;
}

void write_scene(const std::string& path, const SceneSpec& scene) {
  std::ostringstream out;
  char buf[200];
  std::snprintf(buf, sizeof buf, "EXTENT %.6f %.6f\n", scene.extent.x(), scene.extent.y());
  out << buf;
  out << "SEGMENTS\n";
  for (const Segment& s : scene.walls) {
    std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f %.6f\n", s.a.x(), s.a.y(), s.b.x(), s.b.y());
    out << buf;
  }
  out << "PILLARS\n";
  for (const Pillar& p : scene.pillars) {
    std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f\n", p.center.x(), p.center.y(), p.radius);
    out << buf;
  }
  write_file(path, out.str());
}

void write_pgm(const std::string& path, const Eigen::MatrixXd& density) {
  std::string bytes = "P5\n" + std::to_string(density.cols()) + " " + std::to_string(density.rows()) +
                      "\n255\n";
  for (Eigen::Index v = density.rows() - 1; v >= 0; --v) {
    for (Eigen::Index u = 0; u < density.cols(); ++u) {
      const double g = std::clamp(density(v, u), 0.0, 1.0);
      bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(g * 255.0))));
    }
  }
  write_file(path, bytes);
}

void write_results(const std::string& path, const std::vector<QueryRecord>& records) {
  std::ostringstream out;
  char buf[256];
  for (const QueryRecord& r : records) {
    if (r.pose.has_value()) {
      std::snprintf(buf, sizeof buf, "%lld ok %.6f %.6f %.6f %d %d %.6f\n",
                    static_cast<long long>(r.frame_id), r.pose->x, r.pose->y, rad_to_deg(r.pose->yaw),
                    r.inliers, r.pairs, r.rms);
    } else {
      std::snprintf(buf, sizeof buf, "%lld fail nan nan nan %d %d nan\n",
                    static_cast<long long>(r.frame_id), r.inliers, r.pairs);
    }
    out << buf;
  }
  write_file(path, out.str());
}

std::vector<QueryRecord> read_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open '" + path + "' for reading");
  std::vector<QueryRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    QueryRecord r;
    std::string status, xs, ys, yaws, rmss;
    if (!(ls >> r.frame_id >> status >> xs >> ys >> yaws >> r.inliers >> r.pairs >> rmss))
      fail(path + ":" + std::to_string(line_no) + ": bad result record");
    if (status == "ok") {
      r.pose = Pose2(std::stod(xs), std::stod(ys), deg_to_rad(std::stod(yaws)));
      r.rms = std::stod(rmss);
    } else if (status != "fail") {
      fail(path + ":" + std::to_string(line_no) + ": unknown status '" + status + "'");
    }
    records.push_back(r);
  }
  return records;
}

std::string format_eval_report(const EvalReport& report) {
  std::ostringstream out;
  char buf[256];
  out << "# localization evaluation\n";
  out << "# success: TE < threshold and RE < threshold; failed localizations count\n";
  out << "# against the success rate but are excluded from the medians\n";
  std::snprintf(buf, sizeof buf, "frames %d\nproduced %d\nsuccesses %d\nsr_percent %.2f\n",
                report.frames, report.produced, report.successes, report.sr_percent);
  out << buf;
  std::snprintf(buf, sizeof buf, "median_te_m %.6f\nmedian_re_deg %.6f\n", report.median_te_m,
                report.median_re_deg);
  out << buf;
  out << "sr_by_distance_bin\n";
  for (const DistanceBin& bin : report.bins) {
    std::snprintf(buf, sizeof buf, "%.0f %.0f %d %d %.2f\n", bin.lo, bin.hi, bin.count,
                  bin.successes, bin.sr_percent());
    out << buf;
  }
  return out.str();
}

// ---- bundle ----

namespace {

constexpr uint32_t kBundleVersion = 1;

void put_tensor(std::string& out, const std::string& name, const Eigen::MatrixXd& value) {
  if (name.size() > 0xffff) fail("tensor name too long");
  put_u16(out, static_cast<uint16_t>(name.size()));
  out += name;
  out.push_back(2);  // rank
  put_u32(out, static_cast<uint32_t>(value.rows()));
  put_u32(out, static_cast<uint32_t>(value.cols()));
  for (Eigen::Index r = 0; r < value.rows(); ++r)
    for (Eigen::Index c = 0; c < value.cols(); ++c) put_f32(out, static_cast<float>(value(r, c)));
}

}  // namespace

std::string serialize_bundle(const Bundle& bundle) {
  const ModelConfig& mc = bundle.model.config();
  std::string out = "BSLD";
  put_u32(out, kBundleVersion);
  put_u32(out, static_cast<uint32_t>(mc.input_h));
  put_u32(out, static_cast<uint32_t>(mc.input_w));
  put_u32(out, static_cast<uint32_t>(mc.d_p));
  put_u32(out, static_cast<uint32_t>(mc.base_channels));
  put_u32(out, static_cast<uint32_t>(mc.max_channels));
  put_u32(out, static_cast<uint32_t>(mc.depth));
  put_f64(out, mc.leaky_slope);
  put_f64(out, mc.ln_eps);
  put_u64(out, mc.seed);
  put_u32(out, static_cast<uint32_t>(bundle.bev.width_px));
  put_u32(out, static_cast<uint32_t>(bundle.bev.height_px));
  put_f64(out, bundle.bev.pixel_size);
  put_f64(out, bundle.bev.voxel_size);

  const Eigen::MatrixXd& lm = bundle.model.landmarks();
  put_u32(out, static_cast<uint32_t>(lm.rows()));
  for (Eigen::Index j = 0; j < lm.rows(); ++j) {
    put_f32(out, static_cast<float>(lm(j, 0)));
    put_f32(out, static_cast<float>(lm(j, 1)));
  }
  for (const auto& entry : bundle.model.params().entries) {
    if (entry.name == "landmarks") continue;  // carried by the table above
    put_tensor(out, entry.name, *entry.value);
  }
  return out;
}

Bundle deserialize_bundle(const std::string& bytes) {
  Reader in{bytes};
  if (in.str(4, "magic") != "BSLD") fail("bundle: bad magic");
  const uint32_t version = in.u32("version");
  if (version != kBundleVersion)
    fail("bundle: unsupported format version " + std::to_string(version));

  ModelConfig mc;
  mc.input_h = static_cast<int>(in.u32("input_h"));
  mc.input_w = static_cast<int>(in.u32("input_w"));
  mc.d_p = static_cast<int>(in.u32("d_p"));
  mc.base_channels = static_cast<int>(in.u32("base_channels"));
  mc.max_channels = static_cast<int>(in.u32("max_channels"));
  mc.depth = static_cast<int>(in.u32("depth"));
  mc.leaky_slope = in.f64("leaky_slope");
  mc.ln_eps = in.f64("ln_eps");
  mc.seed = in.u64("seed");
  BevConfig bev;
  bev.width_px = static_cast<int>(in.u32("bev width"));
  bev.height_px = static_cast<int>(in.u32("bev height"));
  bev.pixel_size = in.f64("pixel_size");
  bev.voxel_size = in.f64("voxel_size");

  const uint32_t landmark_count = in.u32("landmark count");
  if (landmark_count < 1) fail("bundle: empty landmark table");
  mc.landmark_count = static_cast<int>(landmark_count);

  Bundle bundle(bev, mc);
  Eigen::MatrixXd& lm = bundle.model.landmarks();
  for (uint32_t j = 0; j < landmark_count; ++j) {
    lm(j, 0) = in.f32("landmark x");
    lm(j, 1) = in.f32("landmark y");
  }

  std::set<std::string> loaded;
  while (!in.eof()) {
    const uint16_t name_len = in.u16("tensor name length");
    const std::string name = in.str(name_len, "tensor name");
    const uint8_t rank = in.u8("tensor rank");
    if (rank != 2) fail("bundle: tensor '" + name + "' has unsupported rank");
    const uint32_t rows = in.u32("tensor rows");
    const uint32_t cols = in.u32("tensor cols");
    const ParamEntry* entry = bundle.model.params().find(name);
    if (entry == nullptr) fail("bundle: unknown tensor '" + name + "'");
    if (entry->value->rows() != static_cast<Eigen::Index>(rows) ||
        entry->value->cols() != static_cast<Eigen::Index>(cols))
      fail("bundle: shape mismatch for tensor '" + name + "'");
    for (uint32_t r = 0; r < rows; ++r)
      for (uint32_t c = 0; c < cols; ++c) (*entry->value)(r, c) = in.f32("tensor data");
    if (!loaded.insert(name).second) fail("bundle: duplicate tensor '" + name + "'");
  }
  for (const auto& entry : bundle.model.params().entries) {
    if (entry.name == "landmarks") continue;
    if (loaded.find(entry.name) == loaded.end()) fail("bundle: missing tensor '" + entry.name + "'");
  }
  return bundle;
}

void write_bundle(const std::string& path, const Bundle& bundle) {
  write_file(path, serialize_bundle(bundle));
}

Bundle read_bundle(const std::string& path) { return deserialize_bundle(read_file(path)); }

// ---- checkpoint ----

namespace {
constexpr uint32_t kCheckpointVersion = 1;
}

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::string out = "BSCK";
  put_u32(out, kCheckpointVersion);
  put_u64(out, checkpoint.bundle_bytes.size());
  out += checkpoint.bundle_bytes;

  const TrainConfig& tc = checkpoint.train;
  put_u32(out, static_cast<uint32_t>(tc.epochs));
  put_f64(out, tc.lr_initial);
  put_f64(out, tc.lr_final);
  put_f64(out, tc.lr_step_factor);
  put_f64(out, tc.momentum);
  put_f64(out, tc.val_fraction);
  out.push_back(tc.freeze_landmarks ? 1 : 0);
  out.push_back(tc.augment ? 1 : 0);
  put_f64(out, tc.aug_translation_max);
  put_f64(out, tc.aug_rotation_min);
  put_f64(out, tc.aug_rotation_max);
  put_f64(out, tc.aug_scale_min);
  put_f64(out, tc.aug_scale_max);
  put_u64(out, tc.seed);
  put_f64(out, tc.loss.alpha);
  put_f64(out, tc.loss.beta);
  put_f64(out, tc.loss.gamma);
  put_u32(out, static_cast<uint32_t>(tc.loss.d_p));
  out.push_back(tc.loss.corr_mean ? 1 : 0);
  out.push_back(tc.loss.dist_skip_empty ? 1 : 0);

  const TrainerState& st = checkpoint.state;
  put_u32(out, static_cast<uint32_t>(st.next_epoch));
  put_f64(out, st.best_val);
  put_u32(out, static_cast<uint32_t>(st.best_epoch + 1));  // -1 stored as 0
  put_u32(out, static_cast<uint32_t>(st.rng_state.size()));
  out += st.rng_state;
  put_matrix_f64(out, st.lambda_initial);
  put_u32(out, static_cast<uint32_t>(st.empty_loss_steps));

  put_u32(out, static_cast<uint32_t>(checkpoint.params.size()));
  if (st.velocity.size() != checkpoint.params.size() ||
      st.best_params.size() != checkpoint.params.size())
    fail("checkpoint: state tensor counts disagree");
  for (size_t i = 0; i < checkpoint.params.size(); ++i) {
    put_matrix_f64(out, checkpoint.params[i]);
    put_matrix_f64(out, st.velocity[i]);
    put_matrix_f64(out, st.best_params[i]);
  }
  put_u32(out, static_cast<uint32_t>(st.epoch_logs.size()));
  for (const EpochLog& log : st.epoch_logs) {
    put_u32(out, static_cast<uint32_t>(log.epoch));
    put_f64(out, log.train_loss);
    put_f64(out, log.val_loss);
    put_f64(out, log.lr);
    put_f64(out, log.lambda_mean_disp);
  }
  write_file(path, out);
}

Checkpoint read_checkpoint(const std::string& path) {
  const std::string bytes = read_file(path);
  Reader in{bytes};
  if (in.str(4, "magic") != "BSCK") fail("checkpoint: bad magic");
  if (in.u32("version") != kCheckpointVersion) fail("checkpoint: unsupported version");

  Checkpoint cp;
  const uint64_t bundle_len = in.u64("bundle length");
  cp.bundle_bytes = in.str(bundle_len, "embedded bundle");

  TrainConfig& tc = cp.train;
  tc.epochs = static_cast<int>(in.u32("epochs"));
  tc.lr_initial = in.f64("lr_initial");
  tc.lr_final = in.f64("lr_final");
  tc.lr_step_factor = in.f64("lr_step_factor");
  tc.momentum = in.f64("momentum");
  tc.val_fraction = in.f64("val_fraction");
  tc.freeze_landmarks = in.u8("freeze") != 0;
  tc.augment = in.u8("augment") != 0;
  tc.aug_translation_max = in.f64("aug_translation_max");
  tc.aug_rotation_min = in.f64("aug_rotation_min");
  tc.aug_rotation_max = in.f64("aug_rotation_max");
  tc.aug_scale_min = in.f64("aug_scale_min");
  tc.aug_scale_max = in.f64("aug_scale_max");
  tc.seed = in.u64("seed");
  tc.loss.alpha = in.f64("alpha");
  tc.loss.beta = in.f64("beta");
  tc.loss.gamma = in.f64("gamma");
  tc.loss.d_p = static_cast<int>(in.u32("loss d_p"));
  tc.loss.corr_mean = in.u8("corr_mean") != 0;
  tc.loss.dist_skip_empty = in.u8("dist_skip_empty") != 0;

  TrainerState& st = cp.state;
  st.next_epoch = static_cast<int>(in.u32("next_epoch"));
  st.best_val = in.f64("best_val");
  st.best_epoch = static_cast<int>(in.u32("best_epoch")) - 1;
  const uint32_t rng_len = in.u32("rng length");
  st.rng_state = in.str(rng_len, "rng state");
  st.lambda_initial = get_matrix_f64(in, "lambda_initial");
  st.empty_loss_steps = static_cast<int>(in.u32("empty_loss_steps"));

  const uint32_t n = in.u32("tensor count");
  cp.params.resize(n);
  st.velocity.resize(n);
  st.best_params.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    cp.params[i] = get_matrix_f64(in, "params");
    st.velocity[i] = get_matrix_f64(in, "velocity");
    st.best_params[i] = get_matrix_f64(in, "best params");
  }
  const uint32_t n_logs = in.u32("epoch log count");
  st.epoch_logs.resize(n_logs);
  for (uint32_t i = 0; i < n_logs; ++i) {
    st.epoch_logs[i].epoch = static_cast<int>(in.u32("log epoch"));
    st.epoch_logs[i].train_loss = in.f64("log train");
    st.epoch_logs[i].val_loss = in.f64("log val");
    st.epoch_logs[i].lr = in.f64("log lr");
    st.epoch_logs[i].lambda_mean_disp = in.f64("log disp");
  }
  return cp;
}

}  // namespace bevloc
