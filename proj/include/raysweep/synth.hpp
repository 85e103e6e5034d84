#pragma once

// Geometric event-rig simulator. Brightness is not rendered: every scene
// point acts as an edge that fires an event each time its image
// projection has travelled another `theta` pixels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "raysweep/config.hpp"
#include "raysweep/depth.hpp"
#include "raysweep/errors.hpp"
#include "raysweep/events.hpp"
#include "raysweep/geometry.hpp"
#include "raysweep/io.hpp"

namespace raysweep {

struct SyntheticScene {
  std::vector<Eigen::Vector3d> points;  ///< world frame, meters
  double theta = 1.0;                   ///< image displacement (pixels) per event
  std::uint64_t seed = 1;
  /// Uniform spurious events added to one camera, as a fraction of that
  /// camera's clean event count.
  double spurious_fraction = 0.0;
  int spurious_camera = 0;
};

namespace detail {

inline std::optional<Eigen::Vector2d> visible_pixel(const CameraModel& cam, const Se3& T_cam_w,
                                                    const Eigen::Vector3d& p_w) {
  const auto pix = cam.project(T_cam_w * p_w);
  if (!pix) return std::nullopt;
  const long x = std::lround(pix->x());
  const long y = std::lround(pix->y());
  if (x < 0 || x >= cam.width || y < 0 || y >= cam.height) return std::nullopt;
  return pix;
}

}  // namespace detail

/// Clean edge-crossing events for every camera, then the scene's spurious
/// events (if any). Time steps run from the trajectory start to its end in
/// increments of `dt`.
inline std::vector<EventStream> simulate_events(const SyntheticScene& scene, const RigCalibration& rig,
                                                const PoseTrajectory& traj, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("simulation step must be positive");
  if (!(scene.theta > 0.0)) throw InvalidArgument("theta must be positive");
  const double t0 = traj.front_time();
  const double t1 = traj.back_time();
  const auto steps = static_cast<std::size_t>(std::floor((t1 - t0) / dt + 1e-9));

  std::vector<EventStream> streams(rig.cameras.size());
  for (std::size_t c = 0; c < rig.cameras.size(); ++c) {
    const CameraModel& cam = rig.cameras[c];
    streams[c].camera_id = static_cast<int>(c);
    std::vector<std::optional<Eigen::Vector2d>> prev(scene.points.size());
    std::vector<double> travelled(scene.points.size(), 0.0);

    for (std::size_t k = 0; k <= steps; ++k) {
      const double t = std::min(t1, t0 + static_cast<double>(k) * dt);
      const Se3 T_cam_w = (interpolate_pose(t, traj) * cam.T_body_cam).inverse();
      for (std::size_t i = 0; i < scene.points.size(); ++i) {
        const auto pix = detail::visible_pixel(cam, T_cam_w, scene.points[i]);
        if (!pix) {
          prev[i].reset();
          travelled[i] = 0.0;
          continue;
        }
        if (prev[i]) {
          const Eigen::Vector2d delta = *pix - *prev[i];
          const double step = delta.norm();
          if (step >= 2.0) {
            std::ostringstream msg;
            msg << "point " << i << " moves " << step << " px in one step of " << dt
                << " s on camera " << c << "; reduce dt";
            throw MotionTooFastForStep(msg.str());
          }
          travelled[i] += step;
          while (travelled[i] >= scene.theta) {
            travelled[i] -= scene.theta;
            streams[c].events.push_back({t, static_cast<int>(std::lround(pix->x())),
                                         static_cast<int>(std::lround(pix->y())), delta.x() >= 0.0 ? 1 : -1});
          }
        }
        prev[i] = pix;
      }
    }
  }

  if (scene.spurious_fraction > 0.0 && !streams.empty()) {
    const auto cam_idx = static_cast<std::size_t>(scene.spurious_camera);
    if (cam_idx >= streams.size()) throw InvalidArgument("spurious_camera out of range");
    const CameraModel& cam = rig.cameras[cam_idx];
    auto& events = streams[cam_idx].events;
    const auto n_noise = static_cast<std::size_t>(std::llround(scene.spurious_fraction * static_cast<double>(events.size())));
    std::mt19937_64 rng(scene.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> t_dist(t0, t1);
    std::uniform_int_distribution<int> x_dist(0, cam.width - 1);
    std::uniform_int_distribution<int> y_dist(0, cam.height - 1);
    std::bernoulli_distribution pol(0.5);
    std::vector<Event> noise(n_noise);
    for (auto& e : noise) {
      e.t = t_dist(rng);
      e.x = x_dist(rng);
      e.y = y_dist(rng);
      e.polarity = pol(rng) ? 1 : -1;
    }
    std::stable_sort(noise.begin(), noise.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
    std::vector<Event> merged;
    merged.reserve(events.size() + noise.size());
    std::merge(events.begin(), events.end(), noise.begin(), noise.end(), std::back_inserter(merged),
               [](const Event& a, const Event& b) { return a.t < b.t; });
    events = std::move(merged);
  }
  return streams;
}

/// Front-surface depth of the scene points in an ideal pinhole reference
/// view. Hit pixels are masked with confidence 1.
inline DepthResult ground_truth_depth(const SyntheticScene& scene, const Se3& ref_pose,
                                      const CameraModel& ref_intrinsics) {
  const CameraModel K = ref_intrinsics.ideal();
  DepthResult r = empty_depth_result(K.width, K.height, ref_pose, K, 0.0, 0.0);
  const Se3 T_ref_w = ref_pose.inverse();
  for (const auto& p : scene.points) {
    const Eigen::Vector3d q = T_ref_w * p;
    if (!(q.z() > 0.0)) continue;
    const long x = std::lround(K.fx * q.x() / q.z() + K.cx);
    const long y = std::lround(K.fy * q.y() / q.z() + K.cy);
    if (x < 0 || x >= K.width || y < 0 || y >= K.height) continue;
    const int xi = static_cast<int>(x);
    const int yi = static_cast<int>(y);
    if (!r.mask(xi, yi) || q.z() < r.depth(xi, yi)) {
      r.depth(xi, yi) = q.z();
      r.mask(xi, yi) = 1;
      r.confidence(xi, yi) = 1.0;
    }
  }
  double z_lo = std::numeric_limits<double>::infinity();
  double z_hi = 0.0;
  for (std::size_t p = 0; p < r.mask.size(); ++p) {
    if (!r.mask.data()[p]) continue;
    z_lo = std::min(z_lo, r.depth.data()[p]);
    z_hi = std::max(z_hi, r.depth.data()[p]);
  }
  if (z_hi > 0.0) {
    r.z_min = z_lo;
    r.z_max = z_hi;
  }
  return r;
}

/// Keeps `n` events chosen uniformly at random, preserving time order.
inline EventStream subsample_stream(const EventStream& s, std::size_t n, std::uint64_t seed) {
  if (n >= s.size()) return s;
  std::vector<std::size_t> idx(s.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  EventStream out;
  out.camera_id = s.camera_id;
  out.events.reserve(n);
  for (std::size_t i : idx) out.events.push_back(s.events[i]);
  return out;
}

struct Scenario {
  std::string name;
  SyntheticScene scene;
  RigCalibration rig;
  PoseTrajectory trajectory;
  PipelineConfig config;
  double dt = 1e-3;  ///< simulation step, seconds
};

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {"lateral_room", "forward_corridor", "noisy_left"};
  return names;
}

namespace detail {

// 240x180 event cameras, 11.84 cm apart along the body x axis.
inline RigCalibration stereo_rig(const std::string& name) {
  RigCalibration rig;
  rig.name = name;
  CameraModel left;
  left.width = 240;
  left.height = 180;
  left.fx = 200.0;
  left.fy = 200.0;
  left.cx = 119.5;
  left.cy = 89.5;
  left.dist = {-0.03, 0.008, 0.0004, -0.0003};
  CameraModel right = left;
  right.fx = 201.0;
  right.fy = 200.5;
  right.cx = 120.2;
  right.cy = 90.1;
  right.dist = {-0.025, 0.006, -0.0002, 0.0005};
  right.T_body_cam = Se3::from_translation(0.1184, 0.0, 0.0);
  rig.cameras = {left, right};
  return rig;
}

inline PoseTrajectory sample_trajectory(double duration, double step,
                                        const std::function<Se3(double)>& pose_at) {
  std::vector<PoseSample> samples;
  const auto n = static_cast<std::size_t>(std::llround(duration / step));
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) * duration / static_cast<double>(n);
    samples.push_back({t, pose_at(t)});
  }
  return PoseTrajectory(std::move(samples));
}

// Point seen by the camera at `T_w_cam` at pixel (u, v) and depth z.
inline Eigen::Vector3d unproject(const Se3& T_w_cam, const CameraModel& K, double u, double v, double z) {
  return T_w_cam * Eigen::Vector3d((u - K.cx) / K.fx * z, (v - K.cy) / K.fy * z, z);
}

// 400 points on 40 short 3-D segments plus 100 isolated points, placed in
// the view of `T_w_ref` with inverse depth uniform in [1/far, 1/near].
// Each segment spans 30 pixels so that its points land about 3 pixels apart.
inline std::vector<Eigen::Vector3d> scatter_points(std::mt19937_64& rng, const Se3& T_w_ref, const CameraModel& K,
                                                   double near, double far, double margin) {
  std::uniform_real_distribution<double> u_dist(margin, K.width - 1 - margin);
  std::uniform_real_distribution<double> v_dist(margin * 0.75, K.height - 1 - margin * 0.75);
  std::uniform_real_distribution<double> inv_dist(1.0 / far, 1.0 / near);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<Eigen::Vector3d> pts;
  for (int s = 0; s < 40; ++s) {
    const double u0 = u_dist(rng), v0 = v_dist(rng), z0 = 1.0 / inv_dist(rng);
    const double angle = std::numbers::pi * unit(rng);
    const double u1 = std::clamp(u0 + 30.0 * std::cos(angle), margin, K.width - 1 - margin);
    const double v1 = std::clamp(v0 + 30.0 * std::sin(angle), margin * 0.75, K.height - 1 - margin * 0.75);
    const double z1 = std::clamp(z0 * (1.0 + 0.15 * unit(rng)), near, far);
    const Eigen::Vector3d a = unproject(T_w_ref, K, u0, v0, z0);
    const Eigen::Vector3d b = unproject(T_w_ref, K, u1, v1, z1);
    for (int i = 0; i < 10; ++i) pts.push_back(a + (b - a) * (i / 9.0));
  }
  for (int i = 0; i < 100; ++i) pts.push_back(unproject(T_w_ref, K, u_dist(rng), v_dist(rng), 1.0 / inv_dist(rng)));
  return pts;
}

}  // namespace detail

/// Builds one of the named synthetic scenarios (see scenario_names()).
/// Paths in the returned config are left empty.
inline Scenario make_scenario(const std::string& name, std::uint64_t seed = 7) {
  Scenario sc;
  sc.name = name;
  sc.scene.seed = seed;
  sc.config.seed = seed;
  sc.config.chunk_duration = 0.5;
  sc.config.num_planes = 100;
  // Post-processing for sparse point scenes.
  sc.config.threshold_sigma = 1.0;
  sc.config.threshold_offset = 15.0;
  sc.config.median_kernel = 1;
  std::mt19937_64 rng(seed);
  const double duration = 0.5;

  if (name == "lateral_room" || name == "noisy_left") {
    sc.rig = detail::stereo_rig(name);
    // 0.5 m sideways sweep with a gentle vertical bob and yaw/roll wobble.
    sc.trajectory = detail::sample_trajectory(duration, 0.005, [](double t) {
      const double phase = 2.0 * std::numbers::pi * t / 0.5;
      const Eigen::Quaterniond q = Eigen::AngleAxisd(0.03 * std::sin(phase), Eigen::Vector3d::UnitY()) *
                                   Eigen::AngleAxisd(0.01 * std::sin(0.5 * phase), Eigen::Vector3d::UnitZ());
      return Se3(q, Eigen::Vector3d(-0.25 + 1.0 * t, 0.02 * std::sin(phase), 0.01 * std::cos(phase)));
    });
    const Se3 T_w_ref = interpolate_pose(0.5 * duration, sc.trajectory) * sc.rig.cameras[0].T_body_cam;
    sc.scene.points = detail::scatter_points(rng, T_w_ref, sc.rig.cameras[0], 0.6, 3.6, 20.0);
    sc.config.z_min = 0.45;
    sc.config.z_max = 4.0;
    if (name == "noisy_left") {
      sc.scene.spurious_fraction = 0.2;
      sc.scene.spurious_camera = 0;
    }
  } else if (name == "forward_corridor") {
    sc.rig = detail::stereo_rig(name);
    // Walking forward at 1.5 m/s down a 2 m wide, 2.5 m high corridor.
    sc.trajectory = detail::sample_trajectory(duration, 0.005, [](double t) {
      const double phase = 2.0 * std::numbers::pi * t / 0.5;
      const Eigen::Quaterniond q(Eigen::AngleAxisd(0.01 * std::sin(phase), Eigen::Vector3d::UnitY()));
      return Se3(q, Eigen::Vector3d(0.0, 0.01 * std::sin(2.0 * phase), 1.5 * t));
    });
    std::uniform_real_distribution<double> z_dist(3.0, 18.0);
    std::uniform_real_distribution<double> along(-1.0, 1.0);
    std::uniform_int_distribution<int> wall(0, 3);
    auto wall_point = [&](int w, double z) -> Eigen::Vector3d {
      switch (w) {
        case 0: return {-1.0, along(rng) * 1.2, z};
        case 1: return {1.0, along(rng) * 1.2, z};
        case 2: return {along(rng) * 1.0, 1.2, z};
        default: return {along(rng) * 1.0, -1.3, z};
      }
    };
    for (int s = 0; s < 40; ++s) {
      const int w = wall(rng);
      const double z0 = z_dist(rng);
      const Eigen::Vector3d a = wall_point(w, z0);
      Eigen::Vector3d b = wall_point(w, std::clamp(z0 + 2.0 * along(rng), 3.0, 18.0));
      for (int i = 0; i < 10; ++i) sc.scene.points.push_back(a + (b - a) * (i / 9.0));
    }
    for (int i = 0; i < 100; ++i) sc.scene.points.push_back(wall_point(wall(rng), z_dist(rng)));
    sc.config.z_min = 1.0;
    sc.config.z_max = 20.0;
    sc.config.threshold_offset = 1.5;  // ~10x fewer events than a sideways sweep
  } else {
    std::string known;
    for (const auto& n : scenario_names()) known += (known.empty() ? "" : ", ") + n;
    throw UnknownScenario("unknown scenario '" + name + "' (known: " + known + ")");
  }
  return sc;
}

}  // namespace raysweep
