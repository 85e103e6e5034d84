#pragma once

// Text and binary file formats: event streams, TUM trajectories, rig
// calibration (JSON), PFM/PGM images, PLY point clouds and raw DSI dumps.

#include <algorithm>
#include <array>
#include <limits>
#include <type_traits>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "raysweep/depth.hpp"
#include "raysweep/dsi.hpp"
#include "raysweep/errors.hpp"
#include "raysweep/events.hpp"
#include "raysweep/geometry.hpp"
#include "raysweep/image.hpp"

namespace raysweep {

struct RigCalibration {
  std::string name;
  /// Index 0 is the left (reference) camera.
  std::vector<CameraModel> cameras;

  void validate() const {
    if (cameras.size() < 2)
      throw InsufficientCameras("rig '" + name + "' has " + std::to_string(cameras.size()) +
                                " camera(s); at least 2 are required");
    for (const auto& c : cameras) c.validate();
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Whitespace tokenizer with typed extraction via from_chars.
class Tokens {
 public:
  explicit Tokens(std::string_view line) : rest_(line) {}

  template <typename T>
  bool next(T& out) {
    const auto b = rest_.find_first_not_of(" \t\r,");
    if (b == std::string_view::npos) return false;
    rest_.remove_prefix(b);
    const auto e = std::min(rest_.find_first_of(" \t\r,"), rest_.size());
    const std::string_view tok = rest_.substr(0, e);
    const char* first = tok.data();
    if constexpr (std::is_floating_point_v<T>) {
      if (!tok.empty() && tok.front() == '+') ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), out);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) return false;
    rest_.remove_prefix(e);
    return true;
  }

  bool at_end() const { return rest_.find_first_not_of(" \t\r,") == std::string_view::npos; }

 private:
  std::string_view rest_;
};

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_arithmetic_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    os.write(bytes.data(), sizeof(T));
  } else {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
}

template <typename T>
T read_le(std::istream& is, bool swap = std::endian::native == std::endian::big) {
  std::array<char, sizeof(T)> bytes{};
  is.read(bytes.data(), sizeof(T));
  if (swap) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

inline std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream f(path, mode);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  return f;
}

inline std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, mode);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  return f;
}

inline void check_written(std::ostream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Events: one "t x y p" line per event, '#' starts a comment line.

/// Parses an event stream line by line. Polarity 0 maps to -1. When
/// `bounds` is given, events outside [0, width) x [0, height) are rejected.
/// Backward jumps of at most 1 us are clamped to the previous timestamp.
inline EventStream parse_events(std::istream& in, const std::string& source = "<events>",
                                std::optional<std::pair<int, int>> bounds = std::nullopt, int camera_id = 0) {
  EventStream stream;
  stream.camera_id = camera_id;
  std::string line;
  std::size_t lineno = 0;
  double last_t = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view s = detail::trim(line);
    if (s.empty() || s.front() == '#') continue;
    detail::Tokens tok(s);
    Event e;
    int p = 0;
    const std::string where = "line " + std::to_string(lineno);
    if (!tok.next(e.t) || !tok.next(e.x) || !tok.next(e.y) || !tok.next(p) || !tok.at_end())
      throw ParseError(source, where, "expected 't x y p', got '" + std::string(s) + "'");
    if (!std::isfinite(e.t) || e.t < 0.0) throw ParseError(source, where, "invalid timestamp");
    if (p == 1) {
      e.polarity = 1;
    } else if (p == 0 || p == -1) {
      e.polarity = -1;
    } else {
      throw ParseError(source, where, "polarity must be 0/1 or -1/+1");
    }
    if (bounds && (e.x < 0 || e.x >= bounds->first || e.y < 0 || e.y >= bounds->second)) {
      throw ParseError(source, where,
                       "pixel (" + std::to_string(e.x) + ", " + std::to_string(e.y) + ") outside " +
                           std::to_string(bounds->first) + "x" + std::to_string(bounds->second) + " sensor");
    }
    if (e.t < last_t) {
      if (last_t - e.t > 1e-6) throw NonMonotonicTimestamps(source, where, "timestamp goes backwards");
      e.t = last_t;
    }
    last_t = e.t;
    stream.events.push_back(e);
  }
  return stream;
}

inline EventStream read_events(const std::filesystem::path& path,
                               std::optional<std::pair<int, int>> bounds = std::nullopt, int camera_id = 0) {
  auto f = detail::open_in(path);
  return parse_events(f, path.string(), bounds, camera_id);
}

inline void write_events(std::ostream& os, const EventStream& stream) {
  os << "# t x y p\n";
  for (const Event& e : stream.events)
    os << detail::format_double(e.t) << ' ' << e.x << ' ' << e.y << ' ' << (e.polarity > 0 ? 1 : 0) << '\n';
}

inline void write_events(const std::filesystem::path& path, const EventStream& stream) {
  auto f = detail::open_out(path);
  write_events(f, stream);
  detail::check_written(f, path);
}

// ---------------------------------------------------------------------------
// Trajectories: TUM format "t tx ty tz qx qy qz qw", world-from-body.

inline constexpr double kQuaternionNormTolerance = 1e-3;

inline PoseTrajectory parse_trajectory(std::istream& in, const std::string& source = "<trajectory>") {
  std::vector<PoseSample> samples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view s = detail::trim(line);
    if (s.empty() || s.front() == '#') continue;
    const std::string where = "line " + std::to_string(lineno);
    detail::Tokens tok(s);
    double v[8];
    for (double& x : v)
      if (!tok.next(x)) throw ParseError(source, where, "expected 't tx ty tz qx qy qz qw'");
    if (!tok.at_end()) throw ParseError(source, where, "trailing tokens");
    for (double x : v)
      if (!std::isfinite(x)) throw ParseError(source, where, "non-finite value");
    const Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (std::abs(q.norm() - 1.0) > kQuaternionNormTolerance)
      throw QuaternionNormError(source, where, "quaternion norm " + detail::format_double(q.norm()));
    if (!samples.empty() && !(v[0] > samples.back().t))
      throw ParseError(source, where, "timestamps must be strictly increasing");
    samples.push_back({v[0], Se3(q, Eigen::Vector3d(v[1], v[2], v[3]))});
  }
  if (samples.empty()) throw ParseError(source, "line " + std::to_string(lineno), "no poses");
  return PoseTrajectory(std::move(samples));
}

inline PoseTrajectory read_trajectory(const std::filesystem::path& path) {
  auto f = detail::open_in(path);
  return parse_trajectory(f, path.string());
}

inline void write_trajectory(std::ostream& os, const PoseTrajectory& traj) {
  os << "# t tx ty tz qx qy qz qw\n";
  for (const auto& s : traj.samples()) {
    const auto& t = s.pose.translation();
    const auto& q = s.pose.rotation();
    os << detail::format_double(s.t);
    for (double v : {t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w()}) os << ' ' << detail::format_double(v);
    os << '\n';
  }
}

inline void write_trajectory(const std::filesystem::path& path, const PoseTrajectory& traj) {
  auto f = detail::open_out(path);
  write_trajectory(f, traj);
  detail::check_written(f, path);
}

// ---------------------------------------------------------------------------
// Rig calibration (JSON):
//
//   { "rig": "name",
//     "cameras": [ { "resolution": [W, H], "intrinsics": [fx, fy, cx, cy],
//                    "distortion": [k1, k2, p1, p2],             (optional)
//                    "T_body_cam": { "translation": [x, y, z],   (optional)
//                                    "rotation": [qx, qy, qz, qw] } } ] }

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const std::string& key, const std::string& path,
                                     const std::string& source) {
  if (!obj.is_object() || !obj.contains(key)) throw ParseError(source, path + key, "missing field");
  return obj.at(key);
}

inline std::vector<double> number_array(const nlohmann::json& j, std::size_t n, const std::string& path,
                                        const std::string& source) {
  if (!j.is_array() || j.size() != n)
    throw ParseError(source, path, "expected an array of " + std::to_string(n) + " numbers");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw ParseError(source, path, "expected numbers");
    out.push_back(v.get<double>());
    if (!std::isfinite(out.back())) throw ParseError(source, path, "non-finite value");
  }
  return out;
}

}  // namespace detail

inline RigCalibration parse_calibration(const nlohmann::json& doc, const std::string& source = "<calibration>") {
  RigCalibration rig;
  if (!doc.is_object()) throw ParseError(source, "$", "calibration must be a JSON object");
  if (doc.contains("rig")) {
    if (!doc["rig"].is_string()) throw ParseError(source, "rig", "expected a string");
    rig.name = doc["rig"].get<std::string>();
  }
  const auto& cams = detail::require(doc, "cameras", "", source);
  if (!cams.is_array()) throw ParseError(source, "cameras", "expected an array");
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const std::string path = "cameras[" + std::to_string(i) + "].";
    const auto& c = cams[i];
    CameraModel cam;
    const auto res = detail::number_array(detail::require(c, "resolution", path, source), 2, path + "resolution", source);
    if (res[0] != std::floor(res[0]) || res[1] != std::floor(res[1]) || res[0] < 1 || res[1] < 1)
      throw ParseError(source, path + "resolution", "expected positive integers");
    cam.width = static_cast<int>(res[0]);
    cam.height = static_cast<int>(res[1]);
    const auto k = detail::number_array(detail::require(c, "intrinsics", path, source), 4, path + "intrinsics", source);
    cam.fx = k[0];
    cam.fy = k[1];
    cam.cx = k[2];
    cam.cy = k[3];
    if (!(cam.fx > 0.0) || !(cam.fy > 0.0))
      throw ParseError(source, path + "intrinsics", "focal lengths must be positive");
    if (!(cam.cx >= 0.0 && cam.cx < cam.width && cam.cy >= 0.0 && cam.cy < cam.height))
      throw ParseError(source, path + "intrinsics", "principal point outside the image");
    if (c.contains("distortion")) {
      const auto d = detail::number_array(c["distortion"], 4, path + "distortion", source);
      cam.dist = {d[0], d[1], d[2], d[3]};
    }
    if (c.contains("T_body_cam")) {
      const auto& T = c["T_body_cam"];
      const std::string tpath = path + "T_body_cam.";
      const auto t = detail::number_array(detail::require(T, "translation", tpath, source), 3, tpath + "translation", source);
      const auto q = detail::number_array(detail::require(T, "rotation", tpath, source), 4, tpath + "rotation", source);
      const Eigen::Quaterniond quat(q[3], q[0], q[1], q[2]);
      if (std::abs(quat.norm() - 1.0) > kQuaternionNormTolerance)
        throw QuaternionNormError(source, tpath + "rotation", "quaternion norm " + detail::format_double(quat.norm()));
      cam.T_body_cam = Se3(quat, Eigen::Vector3d(t[0], t[1], t[2]));
    }
    rig.cameras.push_back(cam);
  }
  rig.validate();
  return rig;
}

inline RigCalibration parse_calibration(std::istream& in, const std::string& source = "<calibration>") {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(source, "byte " + std::to_string(e.byte), "invalid JSON");
  }
  return parse_calibration(doc, source);
}

inline RigCalibration read_calibration(const std::filesystem::path& path) {
  auto f = detail::open_in(path);
  return parse_calibration(f, path.string());
}

inline nlohmann::json calibration_to_json(const RigCalibration& rig) {
  nlohmann::json doc;
  doc["rig"] = rig.name;
  doc["cameras"] = nlohmann::json::array();
  for (const auto& c : rig.cameras) {
    const auto& t = c.T_body_cam.translation();
    const auto& q = c.T_body_cam.rotation();
    doc["cameras"].push_back({{"resolution", {c.width, c.height}},
                              {"intrinsics", {c.fx, c.fy, c.cx, c.cy}},
                              {"distortion", {c.dist.k1, c.dist.k2, c.dist.p1, c.dist.p2}},
                              {"T_body_cam",
                               {{"translation", {t.x(), t.y(), t.z()}}, {"rotation", {q.x(), q.y(), q.z(), q.w()}}}}});
  }
  return doc;
}

inline void write_calibration(const std::filesystem::path& path, const RigCalibration& rig) {
  auto f = detail::open_out(path);
  f << calibration_to_json(rig).dump(2) << '\n';
  detail::check_written(f, path);
}

// ---------------------------------------------------------------------------
// Images and clouds.

/// 1-channel PFM, little-endian (scale -1), rows stored bottom-up.
inline void write_pfm(const std::filesystem::path& path, const Image<float>& img) {
  auto f = detail::open_out(path, std::ios::out | std::ios::binary);
  f << "Pf\n" << img.width() << ' ' << img.height() << "\n-1.0\n";
  for (int y = img.height() - 1; y >= 0; --y)
    for (int x = 0; x < img.width(); ++x) detail::write_le<float>(f, img(x, y));
  detail::check_written(f, path);
}

inline Image<float> read_pfm(const std::filesystem::path& path) {
  auto f = detail::open_in(path, std::ios::in | std::ios::binary);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  f >> magic >> w >> h >> scale;
  if (!f || magic != "Pf" || w <= 0 || h <= 0 || scale == 0.0)
    throw ParseError(path.string(), "header", "not a 1-channel PFM file");
  f.get();  // single whitespace before the raster
  const bool swap = (scale < 0.0) != (std::endian::native == std::endian::little);
  Image<float> img(w, h);
  for (int y = h - 1; y >= 0; --y)
    for (int x = 0; x < w; ++x) img(x, y) = detail::read_le<float>(f, swap);
  if (!f) throw ParseError(path.string(), "raster", "truncated PFM data");
  return img;
}

/// Depth as float32 with unmasked pixels set to 0.
inline Image<float> depth_image(const DepthResult& r) {
  Image<float> img(r.width(), r.height(), 0.0f);
  for (std::size_t p = 0; p < img.size(); ++p)
    if (r.mask.data()[p]) img.data()[p] = static_cast<float>(r.depth.data()[p]);
  return img;
}

inline void write_depth_pfm(const std::filesystem::path& path, const DepthResult& r) { write_pfm(path, depth_image(r)); }

/// Raw confidence (vote units) as float32.
inline void write_confidence_pfm(const std::filesystem::path& path, const DepthResult& r) {
  Image<float> img(r.width(), r.height());
  for (std::size_t p = 0; p < img.size(); ++p) img.data()[p] = static_cast<float>(r.confidence.data()[p]);
  write_pfm(path, img);
}

/// 8-bit binary PGM of the confidence, min-max normalized to [0, 255].
inline void write_confidence_pgm(const std::filesystem::path& path, const DepthResult& r) {
  const auto& c = r.confidence.data();
  double lo = 0.0, hi = 0.0;
  if (!c.empty()) {
    const auto [mn, mx] = std::minmax_element(c.begin(), c.end());
    lo = *mn;
    hi = *mx;
  }
  auto f = detail::open_out(path, std::ios::out | std::ios::binary);
  f << "P5\n" << r.width() << ' ' << r.height() << "\n255\n";
  for (double v : c) {
    const double n = hi > lo ? (v - lo) / (hi - lo) : 0.0;
    f.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(n, 0.0, 1.0) * 255.0))));
  }
  detail::check_written(f, path);
}

inline Image<unsigned char> read_pgm(const std::filesystem::path& path) {
  auto f = detail::open_in(path, std::ios::in | std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (!f || magic != "P5" || w <= 0 || h <= 0 || maxval != 255)
    throw ParseError(path.string(), "header", "not an 8-bit binary PGM file");
  f.get();
  Image<unsigned char> img(w, h);
  f.read(reinterpret_cast<char*>(img.data().data()), static_cast<std::streamsize>(img.size()));
  if (!f) throw ParseError(path.string(), "raster", "truncated PGM data");
  return img;
}

/// ASCII PLY with one vertex (x y z confidence) per point.
inline void write_ply(const std::filesystem::path& path, const std::vector<CloudPoint>& cloud) {
  auto f = detail::open_out(path);
  f << "ply\nformat ascii 1.0\ncomment raysweep semi-dense reconstruction\n"
    << "element vertex " << cloud.size() << '\n'
    << "property double x\nproperty double y\nproperty double z\nproperty double confidence\nend_header\n";
  for (const auto& p : cloud) {
    f << detail::format_double(p.position.x()) << ' ' << detail::format_double(p.position.y()) << ' '
      << detail::format_double(p.position.z()) << ' ' << detail::format_double(p.confidence) << '\n';
  }
  detail::check_written(f, path);
}

inline void write_ply(const std::filesystem::path& path, const DepthResult& r) { write_ply(path, to_point_cloud(r)); }

/// Reads back files produced by write_ply.
inline std::vector<CloudPoint> read_ply(const std::filesystem::path& path) {
  auto f = detail::open_in(path);
  std::string line;
  std::size_t count = 0;
  bool header_ok = false;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.rfind("element vertex", 0) == 0) count = std::stoul(line.substr(15));
    if (line == "end_header") {
      header_ok = true;
      break;
    }
  }
  if (!header_ok) throw ParseError(path.string(), "header", "missing end_header");
  std::vector<CloudPoint> cloud;
  for (std::size_t i = 0; i < count; ++i) {
    ++lineno;
    if (!std::getline(f, line)) throw ParseError(path.string(), "line " + std::to_string(lineno), "missing vertex");
    detail::Tokens tok(line);
    CloudPoint p;
    double x, y, z;
    if (!tok.next(x) || !tok.next(y) || !tok.next(z) || !tok.next(p.confidence))
      throw ParseError(path.string(), "line " + std::to_string(lineno), "malformed vertex");
    p.position = {x, y, z};
    cloud.push_back(p);
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Raw DSI dump: int32 W, H, Nz; float32 z_min, z_max; two reserved int32
// zeros; then W*H*Nz float32 votes, x fastest, then y, then plane. All
// little-endian.

struct DsiDump {
  int width = 0;
  int height = 0;
  int num_planes = 0;
  float z_min = 0.0f;
  float z_max = 0.0f;
  std::vector<float> votes;
};

inline void write_dsi_dump(const std::filesystem::path& path, const DsiGrid& grid) {
  auto f = detail::open_out(path, std::ios::out | std::ios::binary);
  detail::write_le<std::int32_t>(f, grid.width());
  detail::write_le<std::int32_t>(f, grid.height());
  detail::write_le<std::int32_t>(f, grid.num_planes());
  detail::write_le<float>(f, static_cast<float>(grid.z_min()));
  detail::write_le<float>(f, static_cast<float>(grid.z_max()));
  detail::write_le<std::int32_t>(f, 0);
  detail::write_le<std::int32_t>(f, 0);
  for (double v : grid.votes()) detail::write_le<float>(f, static_cast<float>(v));
  detail::check_written(f, path);
}

inline DsiDump read_dsi_dump(const std::filesystem::path& path) {
  auto f = detail::open_in(path, std::ios::in | std::ios::binary);
  DsiDump d;
  d.width = detail::read_le<std::int32_t>(f);
  d.height = detail::read_le<std::int32_t>(f);
  d.num_planes = detail::read_le<std::int32_t>(f);
  d.z_min = detail::read_le<float>(f);
  d.z_max = detail::read_le<float>(f);
  detail::read_le<std::int32_t>(f);
  detail::read_le<std::int32_t>(f);
  if (!f || d.width <= 0 || d.height <= 0 || d.num_planes <= 0)
    throw ParseError(path.string(), "header", "invalid DSI dump header");
  d.votes.resize(static_cast<std::size_t>(d.width) * d.height * d.num_planes);
  for (float& v : d.votes) v = detail::read_le<float>(f);
  if (!f) throw ParseError(path.string(), "votes", "truncated DSI dump");
  return d;
}

}  // namespace raysweep
