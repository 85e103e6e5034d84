#pragma once

// Camera models, rigid-body poses and the ray/plane primitives used by the
// space sweep. Everything here is a value type; all functions are pure.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "raysweep/errors.hpp"

namespace raysweep {

/// Rigid transform stored as unit quaternion + translation.
///
/// Naming follows `T_a_b`: maps coordinates expressed in frame b into frame
/// a. Composition `T_a_b * T_b_c` yields `T_a_c`.
class Se3 {
 public:
  Se3() : rotation_(Eigen::Quaterniond::Identity()), translation_(Eigen::Vector3d::Zero()) {}

  /// The quaternion is renormalized; callers pass anything close to unit.
  Se3(const Eigen::Quaterniond& rotation, const Eigen::Vector3d& translation)
      : rotation_(rotation.normalized()), translation_(translation) {}

  static Se3 identity() { return {}; }

  static Se3 from_translation(double x, double y, double z) {
    return {Eigen::Quaterniond::Identity(), Eigen::Vector3d(x, y, z)};
  }

  static Se3 from_axis_angle(const Eigen::Vector3d& axis, double angle,
                             const Eigen::Vector3d& translation = Eigen::Vector3d::Zero()) {
    return {Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized())), translation};
  }

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }
  Eigen::Matrix3d rotation_matrix() const { return rotation_.toRotationMatrix(); }

  Se3 inverse() const {
    const Eigen::Quaterniond q_inv = rotation_.conjugate();
    return Se3(q_inv, -(q_inv * translation_));
  }

  Se3 operator*(const Se3& other) const {
    return Se3(rotation_ * other.rotation_, translation_ + rotation_ * other.translation_);
  }

  Eigen::Vector3d operator*(const Eigen::Vector3d& point) const {
    return rotation_ * point + translation_;
  }

  /// Rotation angle in radians, in [0, pi].
  double angle() const {
    const double w = std::min(1.0, std::abs(rotation_.w()));
    return 2.0 * std::acos(w);
  }

 private:
  Eigen::Quaterniond rotation_;
  Eigen::Vector3d translation_;
};

/// Returns `T_a_b = inverse(T_w_a) * T_w_b`.
inline Se3 relative_pose(const Se3& T_w_a, const Se3& T_w_b) { return T_w_a.inverse() * T_w_b; }

/// Translation distance and rotation angle between two poses.
inline std::pair<double, double> pose_distance(const Se3& a, const Se3& b) {
  const Se3 delta = relative_pose(a, b);
  return {delta.translation().norm(), delta.angle()};
}

/// Radial-tangential coefficients (k1, k2, p1, p2).
struct Distortion {
  double k1 = 0.0;
  double k2 = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;

  bool is_zero() const { return k1 == 0.0 && k2 == 0.0 && p1 == 0.0 && p2 == 0.0; }
};

/// Applies radial-tangential distortion to normalized image coordinates.
inline Eigen::Vector2d distort_normalized(const Eigen::Vector2d& xy, const Distortion& d) {
  const double x = xy.x();
  const double y = xy.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + d.k1 * r2 + d.k2 * r2 * r2;
  return {x * radial + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x),
          y * radial + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y};
}

struct CameraModel {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  Distortion dist;
  /// Rig extrinsic: camera pose in the body frame.
  Se3 T_body_cam;

  /// Throws InvalidArgument describing the first violated invariant.
  void validate() const {
    auto fail = [](const std::string& msg) { throw InvalidArgument("CameraModel: " + msg); };
    if (width <= 0 || height <= 0) fail("resolution must be positive");
    if (!(fx > 0.0) || !(fy > 0.0)) fail("focal lengths must be positive");
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
      fail("principal point outside the image");
    const Eigen::Matrix3d R = T_body_cam.rotation_matrix();
    const double ortho = (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-9 || std::abs(R.determinant() - 1.0) > 1e-9)
      fail("extrinsic rotation is not a proper rotation");
  }

  /// Same intrinsics with distortion removed and identity extrinsic.
  CameraModel ideal() const {
    CameraModel c = *this;
    c.dist = Distortion{};
    c.T_body_cam = Se3::identity();
    return c;
  }

  bool contains(double u, double v) const { return u >= 0.0 && u < width && v >= 0.0 && v < height; }

  Eigen::Vector2d normalized_to_pixel(const Eigen::Vector2d& xy) const {
    const Eigen::Vector2d d = distort_normalized(xy, dist);
    return {fx * d.x() + cx, fy * d.y() + cy};
  }

  /// Projects a point in camera coordinates to (distorted) pixel
  /// coordinates. Returns nullopt for points at or behind the camera.
  std::optional<Eigen::Vector2d> project(const Eigen::Vector3d& p_cam) const {
    if (!(p_cam.z() > 0.0)) return std::nullopt;
    return normalized_to_pixel({p_cam.x() / p_cam.z(), p_cam.y() / p_cam.z()});
  }
};

inline constexpr int kMaxUndistortIterations = 20;
inline constexpr double kUndistortStepTolerance = 1e-10;

/// Inverts the distortion model by Newton iteration, starting from the
/// distorted normalized coordinates.
inline Eigen::Vector2d undistort_pixel(const Eigen::Vector2d& pix, const CameraModel& cam) {
  const Eigen::Vector2d target((pix.x() - cam.cx) / cam.fx, (pix.y() - cam.cy) / cam.fy);
  const Distortion& d = cam.dist;
  if (d.is_zero()) return target;

  Eigen::Vector2d xy = target;
  for (int it = 0; it < kMaxUndistortIterations; ++it) {
    const double x = xy.x();
    const double y = xy.y();
    const double r2 = x * x + y * y;
    const double radial = 1.0 + d.k1 * r2 + d.k2 * r2 * r2;
    const double dradial = 2.0 * (d.k1 + 2.0 * d.k2 * r2);  // d(radial)/d(x) = x * dradial

    Eigen::Matrix2d J;
    J(0, 0) = radial + x * x * dradial + 2.0 * d.p1 * y + 6.0 * d.p2 * x;
    J(0, 1) = x * y * dradial + 2.0 * d.p1 * x + 2.0 * d.p2 * y;
    J(1, 0) = x * y * dradial + 2.0 * d.p1 * x + 2.0 * d.p2 * y;
    J(1, 1) = radial + y * y * dradial + 6.0 * d.p1 * y + 2.0 * d.p2 * x;

    const Eigen::Vector2d residual = distort_normalized(xy, d) - target;
    const double det = J.determinant();
    if (!std::isfinite(det) || std::abs(det) < 1e-15) break;
    const Eigen::Vector2d step = J.inverse() * residual;
    if (!step.allFinite()) break;
    xy -= step;
    if (step.norm() < kUndistortStepTolerance) {
      // A root past the fold of the radial curve mirrors the point; reject it.
      const double rr = xy.squaredNorm();
      if (1.0 + d.k1 * rr + d.k2 * rr * rr <= 0.0 || det <= 0.0) break;
      if ((distort_normalized(xy, d) - target).norm() > 1e-9) break;
      return xy;
    }
  }
  std::ostringstream msg;
  msg << "undistortion of pixel (" << pix.x() << ", " << pix.y() << ") did not converge in "
      << kMaxUndistortIterations << " iterations";
  throw NonConvergedUndistortion(msg.str());
}

/// Intersects the ray `origin + lambda * dir` with the plane Z = z.
/// Returns nullopt (behind) when lambda <= 0 or the ray is parallel to the
/// plane. The returned point has its z component set to exactly `z`.
inline std::optional<Eigen::Vector3d> intersect_ray_with_depth_plane(const Eigen::Vector3d& origin,
                                                                     const Eigen::Vector3d& dir,
                                                                     double z) {
  if (std::abs(dir.z()) < 1e-12) return std::nullopt;
  const double lambda = (z - origin.z()) / dir.z();
  if (!(lambda > 0.0)) return std::nullopt;
  return Eigen::Vector3d(origin.x() + lambda * dir.x(), origin.y() + lambda * dir.y(), z);
}

struct PoseSample {
  double t = 0.0;
  Se3 pose;
};

/// Shortest-arc spherical interpolation, `s` in [0, 1].
inline Eigen::Quaterniond slerp(const Eigen::Quaterniond& a, Eigen::Quaterniond b, double s) {
  double dot = a.coeffs().dot(b.coeffs());
  if (dot < 0.0) {
    b.coeffs() = -b.coeffs();
    dot = -dot;
  }
  double wa = 1.0 - s;
  double wb = s;
  if (dot < 1.0 - 1e-12) {
    const double theta = std::acos(std::min(dot, 1.0));
    const double sin_theta = std::sin(theta);
    wa = std::sin((1.0 - s) * theta) / sin_theta;
    wb = std::sin(s * theta) / sin_theta;
  }
  Eigen::Quaterniond q;
  q.coeffs() = wa * a.coeffs() + wb * b.coeffs();
  return q.normalized();
}

/// Time-indexed world-from-body poses.
class PoseTrajectory {
 public:
  PoseTrajectory() = default;

  explicit PoseTrajectory(std::vector<PoseSample> samples) : samples_(std::move(samples)) {
    if (samples_.empty()) throw InvalidArgument("PoseTrajectory: no samples");
    for (std::size_t i = 1; i < samples_.size(); ++i) {
      if (!(samples_[i].t > samples_[i - 1].t))
        throw InvalidArgument("PoseTrajectory: timestamps must be strictly increasing");
    }
  }

  const std::vector<PoseSample>& samples() const { return samples_; }
  bool empty() const { return samples_.empty(); }
  std::size_t size() const { return samples_.size(); }
  double front_time() const { return samples_.front().t; }
  double back_time() const { return samples_.back().t; }
  bool covers(double t) const { return !empty() && t >= front_time() && t <= back_time(); }

  /// Index of the segment [i, i+1] bracketing t. Requires covers(t) and
  /// at least two samples.
  std::size_t segment(double t) const {
    auto it = std::upper_bound(samples_.begin(), samples_.end(), t,
                               [](double v, const PoseSample& s) { return v < s.t; });
    std::size_t i = static_cast<std::size_t>(it - samples_.begin());
    i = i == 0 ? 0 : i - 1;
    return std::min(i, samples_.size() - 2);
  }

  Se3 interpolate_in_segment(std::size_t i, double t) const {
    const PoseSample& a = samples_[i];
    const PoseSample& b = samples_[i + 1];
    if (t == a.t) return a.pose;
    if (t == b.t) return b.pose;
    const double s = (t - a.t) / (b.t - a.t);
    const Eigen::Vector3d trans = (1.0 - s) * a.pose.translation() + s * b.pose.translation();
    return Se3(slerp(a.pose.rotation(), b.pose.rotation(), s), trans);
  }

 private:
  std::vector<PoseSample> samples_;
};

/// Pose at time t: linear in translation, slerp in rotation.
inline Se3 interpolate_pose(double t, const PoseTrajectory& traj) {
  if (!traj.covers(t)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "time " << t << " outside trajectory span";
    if (!traj.empty()) msg << " [" << traj.front_time() << ", " << traj.back_time() << "]";
    throw OutOfTrajectoryRange(msg.str());
  }
  if (traj.size() == 1) return traj.samples().front().pose;
  return traj.interpolate_in_segment(traj.segment(t), t);
}

}  // namespace raysweep
