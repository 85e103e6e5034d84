#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "raysweep/raysweep.hpp"

namespace fs = std::filesystem;
using namespace raysweep;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kFailure = 2;

// Config-file lookup for `map`: `dir/config` falls back to `dir/config.json`.
fs::path resolve_config_path(const fs::path& p) {
  if (fs::exists(p)) return p;
  fs::path with_ext = p;
  with_ext += ".json";
  if (fs::exists(with_ext)) return with_ext;
  return p;
}

// Registers one CLI flag per config field; `apply` copies the flags that
// were actually given over a loaded config.
struct ConfigFlags {
  PipelineConfig values;
  std::vector<std::pair<CLI::Option*, std::function<void(PipelineConfig&)>>> bound;

  template <class T>
  void add(CLI::App& app, const std::string& flag, T PipelineConfig::*field, const std::string& help) {
    CLI::Option* opt = app.add_option(flag, values.*field, help);
    bound.emplace_back(opt, [this, field](PipelineConfig& c) { c.*field = values.*field; });
  }

  void add_bool(CLI::App& app, const std::string& flag, bool PipelineConfig::*field, const std::string& help) {
    CLI::Option* opt = app.add_option(flag, values.*field, help + " (true/false)");
    bound.emplace_back(opt, [this, field](PipelineConfig& c) { c.*field = values.*field; });
  }

  void apply(PipelineConfig& c) const {
    for (const auto& [opt, copy] : bound)
      if (opt->count() > 0) copy(c);
  }
};

void register_config_flags(CLI::App& app, ConfigFlags& f) {
  f.add(app, "--events", &PipelineConfig::events, "Event files, one per camera in rig order");
  f.add(app, "--trajectory", &PipelineConfig::trajectory, "Body trajectory (TUM format)");
  f.add(app, "--calibration", &PipelineConfig::calibration, "Rig calibration (JSON)");
  f.add(app, "--chunk-duration", &PipelineConfig::chunk_duration, "Chunk length in seconds");
  f.add(app, "--dsi-width", &PipelineConfig::dsi_width, "DSI width in pixels (0: reference camera width)");
  f.add(app, "--dsi-height", &PipelineConfig::dsi_height, "DSI height in pixels (0: reference camera height)");
  f.add(app, "--num-planes", &PipelineConfig::num_planes, "Number of depth planes");
  f.add(app, "--z-min", &PipelineConfig::z_min, "Nearest depth plane in meters");
  f.add(app, "--z-max", &PipelineConfig::z_max, "Farthest depth plane in meters");
  f.add(app, "--fusion", &PipelineConfig::fusion, "min|harmonic|geometric|arithmetic|rms|max|power:<p>");
  f.add(app, "--voting", &PipelineConfig::voting, "nearest|bilinear");
  f.add(app, "--threshold-sigma", &PipelineConfig::threshold_sigma, "Adaptive threshold Gaussian sigma (pixels)");
  f.add(app, "--threshold-offset", &PipelineConfig::threshold_offset, "Adaptive threshold offset C (votes)");
  f.add(app, "--median-kernel", &PipelineConfig::median_kernel, "Median filter size (odd, 1 disables)");
  f.add_bool(app, "--subvoxel", &PipelineConfig::subvoxel, "Parabolic sub-plane depth refinement");
  f.add_bool(app, "--dump-dsi", &PipelineConfig::dump_dsi, "Write the fused DSI to dsi.bin");
  f.add_bool(app, "--polarity-split", &PipelineConfig::polarity_split, "Fuse each polarity separately");
  f.add(app, "--pose-batch", &PipelineConfig::pose_batch, "Share one pose across events this close (s)");
  f.add(app, "--threads", &PipelineConfig::threads, "Voting workers (0: RAYSWEEP_THREADS or all cores)");
  f.add(app, "--seed", &PipelineConfig::seed, "Seed recorded with the run");
}

int cmd_map(const std::string& config_path, const std::string& out_dir, const ConfigFlags& flags) {
  PipelineConfig cfg;
  if (!config_path.empty()) cfg = read_config(resolve_config_path(config_path));
  flags.apply(cfg);
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  const auto stats = run_pipeline(cfg);
  std::size_t processed = 0;
  for (const auto& s : stats) {
    processed += s.processed;
    const VotingStats t = s.total();
    std::printf("chunk %zu [%.3f, %.3f): %s, %zu events, %zu masked pixels\n", s.chunk, s.t_start, s.t_end,
                s.processed ? "ok" : "skipped", t.events_read, s.masked_pixels);
  }
  std::printf("%zu of %zu chunk(s) written to %s\n", processed, stats.size(), cfg.output_dir.c_str());
  return kOk;
}

int cmd_synth(const std::string& scenario, const std::string& out_dir, std::uint64_t seed) {
  const Scenario sc = make_scenario(scenario, seed);
  const auto streams = simulate_events(sc.scene, sc.rig, sc.trajectory, sc.dt);
  const fs::path out(out_dir);
  fs::create_directories(out / "gt");

  PipelineConfig cfg = sc.config;
  cfg.events.clear();
  for (std::size_t c = 0; c < streams.size(); ++c) {
    const std::string name = "events_cam" + std::to_string(c) + ".txt";
    write_events(out / name, streams[c]);
    cfg.events.push_back(name);
  }
  write_trajectory(out / "trajectory.txt", sc.trajectory);
  write_calibration(out / "calibration.json", sc.rig);
  cfg.trajectory = "trajectory.txt";
  cfg.calibration = "calibration.json";
  cfg.output_dir = (out / "out").string();
  write_config(out / "config.json", cfg);

  const auto chunks = chunk_events(streams, cfg.chunk_duration);
  const Se3 ref = select_reference_view(chunks.front(), sc.trajectory, sc.rig.cameras.front());
  const DepthResult gt = ground_truth_depth(sc.scene, ref, reference_camera(sc.rig.cameras.front(), 0, 0));
  write_depth_pfm(out / "gt" / "depth.pfm", gt);

  for (std::size_t c = 0; c < streams.size(); ++c)
    std::printf("camera %zu: %zu events\n", c, streams[c].size());
  std::printf("scenario %s (seed %llu) written to %s\n", scenario.c_str(), static_cast<unsigned long long>(seed),
              out_dir.c_str());
  return kOk;
}

Image<double> load_depth(const fs::path& dir_or_file) {
  const fs::path p = fs::is_directory(dir_or_file) ? dir_or_file / "depth.pfm" : dir_or_file;
  const Image<float> f = read_pfm(p);
  Image<double> d(f.width(), f.height(), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] = f.data()[i];
  return d;
}

int cmd_eval(const std::string& pred, const std::string& gt, int radius, std::optional<double> z_min,
             std::optional<double> z_max, int num_planes) {
  const Image<double> p = load_depth(pred);
  const Image<double> g = load_depth(gt);
  if (!p.same_shape(g))
    throw InvalidArgument("prediction is " + std::to_string(p.width()) + "x" + std::to_string(p.height()) +
                          " but ground truth is " + std::to_string(g.width()) + "x" + std::to_string(g.height()));
  EvalOptions opts;
  opts.match_radius = radius;
  if (z_min && z_max) opts.inverse_depth_tolerance = inverse_depth_spacing(*z_min, *z_max, num_planes);
  const EvalMetrics m = evaluate_depth(p, g, opts);
  std::printf("predicted_pixels     %zu\n", m.predicted);
  std::printf("ground_truth_pixels  %zu\n", m.ground_truth);
  std::printf("mean_abs_rel_error   %.6f\n", m.mean_abs_rel_error);
  std::printf("outlier_fraction     %.6f\n", m.outlier_fraction);
  std::printf("density              %.6f\n", m.density);
  if (opts.inverse_depth_tolerance > 0.0) std::printf("plane_accuracy       %.6f\n", m.accuracy);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-camera event stereo: ray-density DSIs, fusion and semi-dense depth."};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  auto* map = app.add_subcommand("map", "Run the pipeline on recorded events");
  std::string config_path;
  std::string map_out;
  map->add_option("--config", config_path, "Pipeline config (JSON); 'dir/config' also finds 'dir/config.json'");
  map->add_option("--out", map_out, "Output directory (overrides output_dir)");
  ConfigFlags flags;
  register_config_flags(*map, flags);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scenario on disk");
  std::string scenario;
  std::string synth_out;
  std::uint64_t seed = 7;
  std::string names;
  for (const auto& n : scenario_names()) names += (names.empty() ? "" : "|") + n;
  synth->add_option("--scenario", scenario, names)->required();
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", seed, "Scene and noise seed")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Compare a depth map with ground truth");
  std::string pred;
  std::string gt;
  int radius = 1;
  std::optional<double> z_min;
  std::optional<double> z_max;
  int num_planes = 100;
  eval->add_option("--pred", pred, "Chunk output directory or depth.pfm")->required();
  eval->add_option("--gt", gt, "Ground-truth directory or depth.pfm")->required();
  eval->add_option("--match-radius", radius, "Matching radius in pixels")->capture_default_str()->check(
      CLI::NonNegativeNumber);
  eval->add_option("--z-min", z_min, "Plane range for the plane-accuracy figure");
  eval->add_option("--z-max", z_max, "Plane range for the plane-accuracy figure");
  eval->add_option("--num-planes", num_planes, "Plane count for the plane-accuracy figure")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (map->parsed()) return cmd_map(config_path, map_out, flags);
    if (synth->parsed()) return cmd_synth(scenario, synth_out, seed);
    if (eval->parsed()) return cmd_eval(pred, gt, radius, z_min, z_max, num_planes);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kUsage;
}
