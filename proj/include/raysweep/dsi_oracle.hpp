#pragma once

// Reference implementation of event voting used to cross-check the fast
// sweep in dsi.hpp. It rebuilds the ray from world-frame quantities and
// performs a full ray/plane intersection and pinhole projection per plane.
// Keep it free of the fast path's helpers.

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "raysweep/dsi.hpp"
#include "raysweep/events.hpp"
#include "raysweep/geometry.hpp"

namespace raysweep {

inline RayVote vote_event_bruteforce(DsiGrid& grid, const Event& event, const CameraModel& cam, const Se3& T_w_cam,
                                     VotingMode mode) {
  // Ray in the world frame.
  const Eigen::Vector2d xy = undistort_pixel(Eigen::Vector2d(event.x, event.y), cam);
  const Eigen::Vector3d bearing_cam = Eigen::Vector3d(xy.x(), xy.y(), 1.0).normalized();
  const Eigen::Vector3d center_w = T_w_cam.translation();
  const Eigen::Vector3d dir_w = T_w_cam.rotation() * bearing_cam;

  // Into the reference frame.
  const Eigen::Quaterniond q_ref_w = grid.ref_pose().rotation().conjugate();
  const Eigen::Vector3d origin = q_ref_w * (center_w - grid.ref_pose().translation());
  const Eigen::Vector3d dir = q_ref_w * dir_w;

  const CameraModel& K = grid.ref_intrinsics();
  RayVote out;
  for (int i = 0; i < grid.num_planes(); ++i) {
    const double z = grid.depths()[static_cast<std::size_t>(i)];
    const auto hit = intersect_ray_with_depth_plane(origin, dir, z);
    if (!hit) continue;
    const double u = K.fx * hit->x() / hit->z() + K.cx;
    const double v = K.fy * hit->y() / hit->z() + K.cy;
    if (!std::isfinite(u) || !std::isfinite(v) || std::abs(u) > 1e9 || std::abs(v) > 1e9) continue;

    if (mode == VotingMode::Nearest) {
      const long ix = std::lround(u);
      const long iy = std::lround(v);
      if (ix >= 0 && ix < grid.width() && iy >= 0 && iy < grid.height()) {
        grid.at(static_cast<int>(ix), static_cast<int>(iy), i) += 1.0;
        ++out.planes_hit;
        out.votes_added += 1.0;
      }
      continue;
    }

    const int x0 = static_cast<int>(std::floor(u));
    const int y0 = static_cast<int>(std::floor(v));
    bool touched = false;
    for (int dy = 0; dy <= 1; ++dy) {
      for (int dx = 0; dx <= 1; ++dx) {
        const int x = x0 + dx;
        const int y = y0 + dy;
        if (x < 0 || x >= grid.width() || y < 0 || y >= grid.height()) continue;
        const double w = (1.0 - std::abs(u - x)) * (1.0 - std::abs(v - y));
        grid.at(x, y, i) += w;
        out.votes_added += w;
        touched = true;
      }
    }
    if (touched) ++out.planes_hit;
  }
  if (out.planes_hit == 0) ++grid.skipped_events;
  return out;
}

}  // namespace raysweep
