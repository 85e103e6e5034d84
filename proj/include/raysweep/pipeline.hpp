#pragma once

// End-to-end stereo event fusion over time chunks:
//   reference view -> one DSI per camera -> voxel-wise fusion ->
//   semi-dense depth/confidence extraction -> files.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "raysweep/config.hpp"
#include "raysweep/depth.hpp"
#include "raysweep/dsi.hpp"
#include "raysweep/errors.hpp"
#include "raysweep/events.hpp"
#include "raysweep/geometry.hpp"
#include "raysweep/io.hpp"
#include "raysweep/parallel.hpp"

namespace raysweep {

/// Failure inside one chunk; the message names the chunk and the stage.
class PipelineError : public Error {
 public:
  PipelineError(std::size_t chunk, const std::string& stage, const std::string& what)
      : Error("chunk " + std::to_string(chunk) + ", stage '" + stage + "': " + what), chunk_(chunk), stage_(stage) {}

  std::size_t chunk() const { return chunk_; }
  const std::string& stage() const { return stage_; }

 private:
  std::size_t chunk_;
  std::string stage_;
};

struct StageTimings {
  double reference_ms = 0.0;
  double voting_ms = 0.0;
  double fusion_ms = 0.0;
  double extraction_ms = 0.0;
  double writing_ms = 0.0;
};

struct ChunkStats {
  std::size_t chunk = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  bool processed = false;
  std::string note;
  std::vector<VotingStats> cameras;
  std::size_t masked_pixels = 0;
  double max_confidence = 0.0;
  StageTimings timings;

  VotingStats total() const {
    VotingStats s;
    for (const auto& c : cameras) s += c;
    return s;
  }
};

inline void to_json(nlohmann::json& j, const VotingStats& s) {
  j = {{"events_read", s.events_read},
       {"events_voted", s.events_voted},
       {"events_skipped", s.events_skipped},
       {"events_out_of_bounds", s.events_out_of_bounds},
       {"votes", s.votes}};
}

inline void to_json(nlohmann::json& j, const ChunkStats& s) {
  j = {{"chunk", s.chunk},
       {"t_start", s.t_start},
       {"t_end", s.t_end},
       {"processed", s.processed},
       {"note", s.note},
       {"cameras", s.cameras},
       {"masked_pixels", s.masked_pixels},
       {"max_confidence", s.max_confidence},
       {"timings_ms",
        {{"reference", s.timings.reference_ms},
         {"voting", s.timings.voting_ms},
         {"fusion", s.timings.fusion_ms},
         {"extraction", s.timings.extraction_ms},
         {"writing", s.timings.writing_ms}}}};
}

struct ChunkOutput {
  ChunkStats stats;
  DepthResult result;
  std::optional<DsiGrid> fused;  ///< kept only when dumping DSIs
};

/// Pinhole with the left camera's intrinsics rescaled to the DSI lattice.
inline CameraModel reference_camera(const CameraModel& left, int width, int height) {
  CameraModel K = left.ideal();
  if (width > 0 && height > 0 && (width != left.width || height != left.height)) {
    const double sx = static_cast<double>(width) / left.width;
    const double sy = static_cast<double>(height) / left.height;
    K.fx *= sx;
    K.fy *= sy;
    K.cx = (K.cx + 0.5) * sx - 0.5;
    K.cy = (K.cy + 0.5) * sy - 0.5;
    K.width = width;
    K.height = height;
  }
  return K;
}

class Pipeline {
 public:
  Pipeline(std::vector<EventStream> streams, PoseTrajectory trajectory, RigCalibration rig, PipelineConfig config)
      : streams_(std::move(streams)), traj_(std::move(trajectory)), rig_(std::move(rig)), config_(std::move(config)) {
    config_.validate();
    rig_.validate();
    if (streams_.size() != rig_.cameras.size())
      throw InvalidArgument("got " + std::to_string(streams_.size()) + " event streams for " +
                            std::to_string(rig_.cameras.size()) + " cameras");
    fusion_ = config_.fusion_op();
    voting_.mode = config_.voting_mode();
    voting_.pose_batch_seconds = config_.pose_batch;
    voting_.threads = static_cast<int>(resolve_thread_count(config_.threads));
    post_ = {config_.threshold_sigma, config_.threshold_offset, config_.median_kernel, config_.subvoxel};
    ref_K_ = reference_camera(rig_.cameras[0], config_.dsi_width, config_.dsi_height);
    for (const auto& cam : rig_.cameras) bearings_.emplace_back(cam);
    chunks_ = chunk_events(streams_, config_.chunk_duration);
  }

  const std::vector<Chunk>& chunks() const { return chunks_; }
  const std::vector<EventStream>& streams() const { return streams_; }
  const PipelineConfig& config() const { return config_; }
  const CameraModel& reference_intrinsics() const { return ref_K_; }
  int worker_count() const { return voting_.threads; }

  /// Runs every stage for one chunk. Safe to call concurrently and in any
  /// chunk order.
  ChunkOutput process(const Chunk& chunk) const {
    using Clock = std::chrono::steady_clock;
    auto ms_since = [](Clock::time_point t) {
      return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
    };
    ChunkOutput out;
    ChunkStats& st = out.stats;
    st.chunk = chunk.index;
    st.t_start = chunk.t_start;
    st.t_end = chunk.t_end;

    auto t = Clock::now();
    Se3 ref_pose;
    if (!traj_.covers(chunk.t_mid())) {
      st.note = "reference time outside trajectory; chunk skipped";
      spdlog::warn("chunk {}: {}", chunk.index, st.note);
      out.result = empty_depth_result(ref_K_.width, ref_K_.height, Se3::identity(), ref_K_, config_.z_min, config_.z_max);
      return out;
    }
    try {
      ref_pose = select_reference_view(chunk, traj_, rig_.cameras[0]);
    } catch (const std::exception& e) {
      throw PipelineError(chunk.index, "reference view", e.what());
    }
    st.timings.reference_ms = ms_since(t);

    t = Clock::now();
    std::vector<DsiGrid> grids;
    std::vector<DsiGrid> negative;
    try {
      const DsiGrid blank(ref_K_.width, ref_K_.height, config_.num_planes, config_.z_min, config_.z_max, ref_pose, ref_K_);
      for (std::size_t c = 0; c < rig_.cameras.size(); ++c) {
        const auto events = chunk.events(streams_, c);
        grids.push_back(blank);
        if (config_.polarity_split) {
          std::vector<Event> pos, neg;
          for (const auto& e : events) (e.polarity > 0 ? pos : neg).push_back(e);
          negative.push_back(blank);
          VotingStats s = vote_events(grids.back(), pos, rig_.cameras[c], bearings_[c], traj_, voting_);
          s += vote_events(negative.back(), neg, rig_.cameras[c], bearings_[c], traj_, voting_);
          st.cameras.push_back(s);
        } else {
          st.cameras.push_back(vote_events(grids.back(), events, rig_.cameras[c], bearings_[c], traj_, voting_));
        }
        const auto& s = st.cameras.back();
        spdlog::info("chunk {} camera {}: {} events read, {} voted, {} skipped, {} out of bounds, {:.0f} votes",
                     chunk.index, c, s.events_read, s.events_voted, s.events_skipped, s.events_out_of_bounds, s.votes);
      }
    } catch (const std::exception& e) {
      throw PipelineError(chunk.index, "voting", e.what());
    }
    st.timings.voting_ms = ms_since(t);

    t = Clock::now();
    DsiGrid fused;
    try {
      fused = fuse(grids, fusion_, voting_.threads);
      if (config_.polarity_split) fused.accumulate(fuse(negative, fusion_, voting_.threads));
    } catch (const std::exception& e) {
      throw PipelineError(chunk.index, "fusion", e.what());
    }
    grids.clear();
    negative.clear();
    st.timings.fusion_ms = ms_since(t);

    t = Clock::now();
    try {
      out.result = extract_semidense(fused, post_);
    } catch (const std::exception& e) {
      throw PipelineError(chunk.index, "extraction", e.what());
    }
    st.timings.extraction_ms = ms_since(t);
    st.masked_pixels = out.result.masked_count();
    for (double c : out.result.confidence.data()) st.max_confidence = std::max(st.max_confidence, c);
    st.processed = true;
    spdlog::info("chunk {}: fused with {}, {} masked pixels, max confidence {:.3f}", chunk.index, fusion_.name(),
                 st.masked_pixels, st.max_confidence);
    if (config_.dump_dsi) out.fused = std::move(fused);
    return out;
  }

  std::vector<ChunkOutput> run() const {
    std::vector<ChunkOutput> outs;
    outs.reserve(chunks_.size());
    for (const auto& c : chunks_) outs.push_back(process(c));
    return outs;
  }

 private:
  std::vector<EventStream> streams_;
  PoseTrajectory traj_;
  RigCalibration rig_;
  PipelineConfig config_;
  FusionOp fusion_;
  VotingOptions voting_;
  PostprocessOptions post_;
  CameraModel ref_K_;
  std::vector<BearingTable> bearings_;
  std::vector<Chunk> chunks_;
};

/// Writes depth.pfm, confidence.pfm (raw votes), confidence.pgm
/// (normalized), cloud.ply, stats.json and optionally dsi.bin.
inline void write_chunk_outputs(const std::filesystem::path& dir, ChunkOutput& out) {
  const auto t = std::chrono::steady_clock::now();
  try {
    std::filesystem::create_directories(dir);
    write_depth_pfm(dir / "depth.pfm", out.result);
    write_confidence_pfm(dir / "confidence.pfm", out.result);
    write_confidence_pgm(dir / "confidence.pgm", out.result);
    write_ply(dir / "cloud.ply", out.result);
    if (out.fused) write_dsi_dump(dir / "dsi.bin", *out.fused);
  } catch (const std::exception& e) {
    throw PipelineError(out.stats.chunk, "writing", e.what());
  }
  out.stats.timings.writing_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t).count();
  std::ofstream f(dir / "stats.json");
  f << nlohmann::json(out.stats).dump(2) << '\n';
  if (!f) throw PipelineError(out.stats.chunk, "writing", "cannot write " + (dir / "stats.json").string());
}

/// Loads the inputs named by `config`, processes every chunk and writes
/// `<output_dir>/chunk<k>/` for each processed chunk.
inline std::vector<ChunkStats> run_pipeline(const PipelineConfig& config) {
  config.validate();
  if (config.calibration.empty()) throw InvalidArgument("config: calibration path is required");
  if (config.trajectory.empty()) throw InvalidArgument("config: trajectory path is required");
  RigCalibration rig = read_calibration(config.calibration);
  if (config.events.size() != rig.cameras.size())
    throw InvalidArgument("config lists " + std::to_string(config.events.size()) + " event files for " +
                          std::to_string(rig.cameras.size()) + " cameras");
  std::vector<EventStream> streams;
  for (std::size_t c = 0; c < rig.cameras.size(); ++c) {
    streams.push_back(read_events(config.events[c], std::make_pair(rig.cameras[c].width, rig.cameras[c].height),
                                  static_cast<int>(c)));
    spdlog::info("camera {}: {} events from {}", c, streams.back().size(), config.events[c]);
  }
  PoseTrajectory traj = read_trajectory(config.trajectory);

  const Pipeline pipeline(std::move(streams), std::move(traj), std::move(rig), config);
  spdlog::info("{} chunk(s) of {} s, {} worker(s)", pipeline.chunks().size(), config.chunk_duration,
               pipeline.worker_count());
  std::vector<ChunkStats> stats;
  for (const auto& chunk : pipeline.chunks()) {
    ChunkOutput out = pipeline.process(chunk);
    if (out.stats.processed)
      write_chunk_outputs(std::filesystem::path(config.output_dir) / ("chunk" + std::to_string(chunk.index)), out);
    stats.push_back(std::move(out.stats));
  }
  return stats;
}

}  // namespace raysweep
