#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "raysweep/dsi.hpp"
#include "raysweep/errors.hpp"

namespace raysweep {

/// Every field maps 1:1 to a JSON key of the same name and to a CLI flag
/// with underscores replaced by dashes.
struct PipelineConfig {
  std::vector<std::string> events;  ///< one event file per camera, rig order
  std::string trajectory;
  std::string calibration;
  std::string output_dir = "out";

  double chunk_duration = 0.5;  ///< seconds
  int dsi_width = 0;            ///< 0: reference camera resolution
  int dsi_height = 0;
  int num_planes = 100;
  double z_min = 0.45;  ///< meters
  double z_max = 4.0;
  std::string fusion = "harmonic";
  std::string voting = "bilinear";
  double threshold_sigma = 7.0;   ///< pixels
  double threshold_offset = -6.0; ///< vote units
  int median_kernel = 5;
  bool subvoxel = true;
  bool dump_dsi = false;
  /// Vote positive and negative events into separate DSIs, fuse each
  /// polarity across cameras, then add the two fused volumes.
  bool polarity_split = false;
  double pose_batch = 0.0;  ///< seconds; events this close share one pose
  int threads = 0;          ///< 0: RAYSWEEP_THREADS or hardware concurrency
  std::uint64_t seed = 0;

  FusionOp fusion_op() const { return FusionOp::parse(fusion); }
  VotingMode voting_mode() const { return parse_voting_mode(voting); }

  /// Throws InvalidArgument on the first out-of-range parameter.
  void validate() const {
    auto fail = [](const std::string& m) { throw InvalidArgument("config: " + m); };
    if (!(chunk_duration > 0.0) || !std::isfinite(chunk_duration)) fail("chunk_duration must be > 0");
    if (dsi_width < 0 || dsi_height < 0) fail("dsi_width/dsi_height must be >= 0");
    if ((dsi_width == 0) != (dsi_height == 0)) fail("set both dsi_width and dsi_height, or neither");
    if (num_planes < 2) fail("num_planes must be >= 2");
    if (!(z_min > 0.0) || !(z_max > z_min) || !std::isfinite(z_max)) fail("need 0 < z_min < z_max");
    fusion_op();
    voting_mode();
    if (!(threshold_sigma > 0.0)) fail("threshold_sigma must be > 0");
    if (!std::isfinite(threshold_offset)) fail("threshold_offset must be finite");
    if (median_kernel < 1 || median_kernel % 2 == 0) fail("median_kernel must be odd and >= 1");
    if (!(pose_batch >= 0.0)) fail("pose_batch must be >= 0");
    if (threads < 0) fail("threads must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = nlohmann::json{{"events", c.events},
                     {"trajectory", c.trajectory},
                     {"calibration", c.calibration},
                     {"output_dir", c.output_dir},
                     {"chunk_duration", c.chunk_duration},
                     {"dsi_width", c.dsi_width},
                     {"dsi_height", c.dsi_height},
                     {"num_planes", c.num_planes},
                     {"z_min", c.z_min},
                     {"z_max", c.z_max},
                     {"fusion", c.fusion},
                     {"voting", c.voting},
                     {"threshold_sigma", c.threshold_sigma},
                     {"threshold_offset", c.threshold_offset},
                     {"median_kernel", c.median_kernel},
                     {"subvoxel", c.subvoxel},
                     {"dump_dsi", c.dump_dsi},
                     {"polarity_split", c.polarity_split},
                     {"pose_batch", c.pose_batch},
                     {"threads", c.threads},
                     {"seed", c.seed}};
}

/// Unknown keys are rejected so that typos do not pass silently.
inline PipelineConfig config_from_json(const nlohmann::json& j, const std::string& source = "<config>") {
  if (!j.is_object()) throw ParseError(source, "$", "config must be a JSON object");
  PipelineConfig c;
  const nlohmann::json defaults = c;
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ParseError(source, key, "unknown config key");
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ParseError(source, key, "wrong type");
    }
  };
  get("events", c.events);
  get("trajectory", c.trajectory);
  get("calibration", c.calibration);
  get("output_dir", c.output_dir);
  get("chunk_duration", c.chunk_duration);
  get("dsi_width", c.dsi_width);
  get("dsi_height", c.dsi_height);
  get("num_planes", c.num_planes);
  get("z_min", c.z_min);
  get("z_max", c.z_max);
  get("fusion", c.fusion);
  get("voting", c.voting);
  get("threshold_sigma", c.threshold_sigma);
  get("threshold_offset", c.threshold_offset);
  get("median_kernel", c.median_kernel);
  get("subvoxel", c.subvoxel);
  get("dump_dsi", c.dump_dsi);
  get("polarity_split", c.polarity_split);
  get("pose_batch", c.pose_batch);
  get("threads", c.threads);
  get("seed", c.seed);
  return c;
}

/// Loads a config file; relative input paths are resolved against the
/// file's directory.
inline PipelineConfig read_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), "byte " + std::to_string(e.byte), "invalid JSON");
  }
  PipelineConfig c = config_from_json(j, path.string());
  const auto base = path.parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  for (auto& e : c.events) resolve(e);
  resolve(c.trajectory);
  resolve(c.calibration);
  return c;
}

inline void write_config(const std::filesystem::path& path, const PipelineConfig& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << nlohmann::json(c).dump(2) << '\n';
  if (!f) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace raysweep
