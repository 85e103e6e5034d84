#pragma once

// Disparity space image: a W x H x Nz ray-density volume attached to a
// virtual pinhole reference view, populated by sweeping each event's
// viewing ray through a stack of fronto-parallel depth planes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "raysweep/errors.hpp"
#include "raysweep/events.hpp"
#include "raysweep/geometry.hpp"
#include "raysweep/parallel.hpp"

namespace raysweep {

enum class VotingMode { Nearest, Bilinear };

inline std::string to_string(VotingMode m) { return m == VotingMode::Nearest ? "nearest" : "bilinear"; }

inline VotingMode parse_voting_mode(const std::string& s) {
  if (s == "nearest") return VotingMode::Nearest;
  if (s == "bilinear") return VotingMode::Bilinear;
  throw InvalidArgument("unknown voting mode '" + s + "' (expected nearest|bilinear)");
}

/// Depths uniformly spaced in inverse depth, z_0 = z_min, z_{Nz-1} = z_max.
inline std::vector<double> plane_depths(double z_min, double z_max, int num_planes) {
  if (!(z_min > 0.0) || !(z_max > z_min) || !std::isfinite(z_max)) {
    std::ostringstream msg;
    msg << "invalid depth range [" << z_min << ", " << z_max << "]";
    throw InvalidDepthRange(msg.str());
  }
  if (num_planes < 2) throw InvalidDepthRange("need at least 2 depth planes");
  const double inv_min = 1.0 / z_min;
  const double inv_max = 1.0 / z_max;
  std::vector<double> z(static_cast<std::size_t>(num_planes));
  for (int i = 0; i < num_planes; ++i) {
    const double s = static_cast<double>(i) / static_cast<double>(num_planes - 1);
    z[static_cast<std::size_t>(i)] = 1.0 / (inv_min + s * (inv_max - inv_min));
  }
  z.front() = z_min;
  z.back() = z_max;
  return z;
}

class DsiGrid {
 public:
  DsiGrid() = default;

  /// `ref_intrinsics` is used as an ideal pinhole; any distortion or
  /// extrinsic it carries is dropped.
  DsiGrid(int width, int height, int num_planes, double z_min, double z_max, const Se3& ref_pose,
          const CameraModel& ref_intrinsics)
      : width_(width),
        height_(height),
        num_planes_(num_planes),
        z_min_(z_min),
        z_max_(z_max),
        ref_pose_(ref_pose),
        T_ref_world_(ref_pose.inverse()),
        ref_intrinsics_(ref_intrinsics.ideal()) {
    if (width <= 0 || height <= 0) throw InvalidArgument("DSI dimensions must be positive");
    depths_ = plane_depths(z_min, z_max, num_planes);
    inv_depths_.resize(depths_.size());
    for (std::size_t i = 0; i < depths_.size(); ++i) inv_depths_[i] = 1.0 / depths_[i];
    votes_.assign(static_cast<std::size_t>(width) * height * num_planes, 0.0);
  }

  /// Empty grid with the same geometry.
  DsiGrid zeros_like() const {
    DsiGrid g = *this;
    std::fill(g.votes_.begin(), g.votes_.end(), 0.0);
    g.skipped_events = 0;
    return g;
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int num_planes() const { return num_planes_; }
  double z_min() const { return z_min_; }
  double z_max() const { return z_max_; }
  const Se3& ref_pose() const { return ref_pose_; }
  const Se3& T_ref_world() const { return T_ref_world_; }
  const CameraModel& ref_intrinsics() const { return ref_intrinsics_; }
  const std::vector<double>& depths() const { return depths_; }
  const std::vector<double>& inverse_depths() const { return inv_depths_; }

  std::size_t plane_stride() const { return static_cast<std::size_t>(width_) * height_; }
  std::size_t index(int x, int y, int plane) const {
    return (static_cast<std::size_t>(plane) * height_ + y) * width_ + x;
  }
  double& at(int x, int y, int plane) { return votes_[index(x, y, plane)]; }
  double at(int x, int y, int plane) const { return votes_[index(x, y, plane)]; }

  /// Votes in x-fastest, then y, then plane order.
  std::vector<double>& votes() { return votes_; }
  const std::vector<double>& votes() const { return votes_; }

  double total_votes() const {
    double s = 0.0;
    for (double v : votes_) s += v;
    return s;
  }

  /// Same lattice, depth sampling and reference view.
  bool aligned_with(const DsiGrid& o) const {
    const auto& a = ref_intrinsics_;
    const auto& b = o.ref_intrinsics_;
    return width_ == o.width_ && height_ == o.height_ && num_planes_ == o.num_planes_ &&
           z_min_ == o.z_min_ && z_max_ == o.z_max_ && a.fx == b.fx && a.fy == b.fy && a.cx == b.cx &&
           a.cy == b.cy && ref_pose_.translation() == o.ref_pose_.translation() &&
           ref_pose_.rotation().coeffs() == o.ref_pose_.rotation().coeffs();
  }

  /// Element-wise `this += other`.
  void accumulate(const DsiGrid& other) {
    if (!aligned_with(other)) throw MisalignedDsi("cannot accumulate misaligned DSIs");
    for (std::size_t i = 0; i < votes_.size(); ++i) votes_[i] += other.votes_[i];
    skipped_events += other.skipped_events;
  }

  std::uint64_t skipped_events = 0;

 private:
  int width_ = 0;
  int height_ = 0;
  int num_planes_ = 0;
  double z_min_ = 0.0;
  double z_max_ = 0.0;
  Se3 ref_pose_;
  Se3 T_ref_world_;
  CameraModel ref_intrinsics_;
  std::vector<double> depths_;
  std::vector<double> inv_depths_;
  std::vector<double> votes_;
};

struct RayVote {
  int planes_hit = 0;        ///< planes whose intersection touched the lattice
  double votes_added = 0.0;  ///< total weight deposited
};

struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d direction;  ///< unit length
};

/// Viewing ray of a unit bearing (camera frame) expressed in the reference
/// frame of `grid`.
inline Ray ray_in_reference(const DsiGrid& grid, const Se3& T_w_cam, const Eigen::Vector3d& bearing) {
  const Se3 T_ref_cam = grid.T_ref_world() * T_w_cam;
  return {T_ref_cam.translation(), T_ref_cam.rotation() * bearing};
}

/// Unit bearing of an undistorted pixel.
inline Eigen::Vector3d pixel_bearing(int x, int y, const CameraModel& cam) {
  const Eigen::Vector2d xy = undistort_pixel(Eigen::Vector2d(x, y), cam);
  return Eigen::Vector3d(xy.x(), xy.y(), 1.0).normalized();
}

namespace detail {

// Image-plane line of a ray across the planes: plane i is crossed at
// (u_inf + du / z_i, v_inf + dv / z_i).
struct PlaneSweep {
  double u_inf = 0.0;
  double v_inf = 0.0;
  double du = 0.0;
  double dv = 0.0;
  double oz = 0.0;
  double dz = 0.0;
  bool usable = false;
};

inline PlaneSweep plane_sweep(const CameraModel& K, const Ray& ray) {
  PlaneSweep s;
  const Eigen::Vector3d& o = ray.origin;
  const Eigen::Vector3d& d = ray.direction;
  if (std::abs(d.z()) < 1e-12) return s;
  const double ax = d.x() / d.z();
  const double ay = d.y() / d.z();
  s.u_inf = K.fx * ax + K.cx;
  s.v_inf = K.fy * ay + K.cy;
  s.du = K.fx * (o.x() - o.z() * ax);
  s.dv = K.fy * (o.y() - o.z() * ay);
  s.oz = o.z();
  s.dz = d.z();
  s.usable = true;
  return s;
}

// Deposits the crossing of plane i; returns the weight added and sets
// `touched` when any lattice cell was hit.
inline double deposit(double* plane, int W, int H, const PlaneSweep& s, double depth, double inv_depth,
                      VotingMode mode, bool& touched) {
  touched = false;
  const double lambda = (depth - s.oz) / s.dz;
  if (!(lambda > 0.0)) return 0.0;
  const double u = s.u_inf + s.du * inv_depth;
  const double v = s.v_inf + s.dv * inv_depth;
  if (mode == VotingMode::Nearest) {
    if (!(u > -0.5 && u < W - 0.5 && v > -0.5 && v < H - 0.5)) return 0.0;
    const long ix = std::lround(u);
    const long iy = std::lround(v);
    if (ix < 0 || ix >= W || iy < 0 || iy >= H) return 0.0;
    plane[static_cast<std::size_t>(iy) * W + ix] += 1.0;
    touched = true;
    return 1.0;
  }
  if (!(u >= -1.0 && u < W && v >= -1.0 && v < H)) return 0.0;
  const double fu = std::floor(u);
  const double fv = std::floor(v);
  const int x0 = static_cast<int>(fu);
  const int y0 = static_cast<int>(fv);
  const double wx = u - fu;
  const double wy = v - fv;
  const double w[4] = {(1.0 - wx) * (1.0 - wy), wx * (1.0 - wy), (1.0 - wx) * wy, wx * wy};
  const int cx[4] = {x0, x0 + 1, x0, x0 + 1};
  const int cy[4] = {y0, y0, y0 + 1, y0 + 1};
  double added = 0.0;
  for (int c = 0; c < 4; ++c) {
    if (cx[c] < 0 || cx[c] >= W || cy[c] < 0 || cy[c] >= H) continue;
    plane[static_cast<std::size_t>(cy[c]) * W + cx[c]] += w[c];
    added += w[c];
    touched = true;
  }
  return added;
}

}  // namespace detail

/// Sweeps one ray through every depth plane and deposits one unit of
/// weight per plane.
///
/// The projection of the plane-i intersection is affine in inverse depth:
/// u_i = fx * (dx/dz) + cx + fx * (ox - oz * dx/dz) / z_i, so each plane
/// costs a multiply-add instead of a full intersection.
///
/// Only planes in [plane_begin, plane_end) are touched; when `plane_votes`
/// is given, the weight deposited on plane i is added to plane_votes[i].
inline RayVote vote_ray(DsiGrid& grid, const Ray& ray, VotingMode mode, int plane_begin, int plane_end,
                        double* plane_votes = nullptr) {
  RayVote out;
  const detail::PlaneSweep s = detail::plane_sweep(grid.ref_intrinsics(), ray);
  if (!s.usable) return out;
  const auto& depths = grid.depths();
  const auto& inv = grid.inverse_depths();
  for (int i = plane_begin; i < plane_end; ++i) {
    bool touched = false;
    const double added = detail::deposit(grid.votes().data() + static_cast<std::size_t>(i) * grid.plane_stride(),
                                         grid.width(), grid.height(), s, depths[i], inv[i], mode, touched);
    out.votes_added += added;
    if (plane_votes) plane_votes[i] += added;
    if (touched) ++out.planes_hit;
  }
  return out;
}

inline RayVote vote_ray(DsiGrid& grid, const Ray& ray, VotingMode mode) {
  return vote_ray(grid, ray, mode, 0, grid.num_planes());
}

/// Back-projects one event seen by `cam` at pose `T_w_cam` into the grid.
/// An event that misses every plane increments `grid.skipped_events`.
inline RayVote vote_event(DsiGrid& grid, const Event& event, const CameraModel& cam, const Se3& T_w_cam,
                          VotingMode mode) {
  const RayVote r = vote_ray(grid, ray_in_reference(grid, T_w_cam, pixel_bearing(event.x, event.y, cam)), mode);
  if (r.planes_hit == 0) ++grid.skipped_events;
  return r;
}

/// Precomputed unit bearings for every pixel of a camera.
class BearingTable {
 public:
  BearingTable() = default;
  explicit BearingTable(const CameraModel& cam) : width_(cam.width), height_(cam.height) {
    bearings_.resize(static_cast<std::size_t>(width_) * height_);
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x) bearings_[static_cast<std::size_t>(y) * width_ + x] = pixel_bearing(x, y, cam);
  }

  const Eigen::Vector3d& operator()(int x, int y) const {
    return bearings_[static_cast<std::size_t>(y) * width_ + x];
  }
  int width() const { return width_; }
  int height() const { return height_; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<Eigen::Vector3d> bearings_;
};

/// Element-wise sum of grids voted from disjoint event partitions.
inline DsiGrid merge_partial_grids(std::span<const DsiGrid> parts) {
  if (parts.empty()) throw InvalidArgument("merge_partial_grids: no parts");
  DsiGrid out = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) out.accumulate(parts[i]);
  return out;
}

struct VotingOptions {
  VotingMode mode = VotingMode::Bilinear;
  /// Events closer in time than this share one pose (0 = exact per event).
  double pose_batch_seconds = 0.0;
  int threads = 1;
};

struct VotingStats {
  std::uint64_t events_read = 0;
  std::uint64_t events_voted = 0;
  std::uint64_t events_skipped = 0;
  /// Pixel outside the camera or timestamp outside the trajectory.
  std::uint64_t events_out_of_bounds = 0;
  double votes = 0.0;

  VotingStats& operator+=(const VotingStats& o) {
    events_read += o.events_read;
    events_voted += o.events_voted;
    events_skipped += o.events_skipped;
    events_out_of_bounds += o.events_out_of_bounds;
    votes += o.votes;
    return *this;
  }
};

namespace detail {

// Pose lookup for time-ordered queries, remembering the current segment.
class PoseCursor {
 public:
  explicit PoseCursor(const PoseTrajectory& traj) : traj_(traj) {}

  std::optional<Se3> at(double t) {
    if (!traj_.covers(t)) return std::nullopt;
    if (traj_.size() == 1) return traj_.samples().front().pose;
    const auto& s = traj_.samples();
    if (!(t >= s[seg_].t && t <= s[seg_ + 1].t)) seg_ = traj_.segment(t);
    return traj_.interpolate_in_segment(seg_, t);
  }

 private:
  const PoseTrajectory& traj_;
  std::size_t seg_ = 0;
};

inline constexpr std::size_t kRayBatch = std::size_t{1} << 16;

// Plane sweeps of the reference-frame rays for events[begin, end). With pose batching, every
// event in the time bin [t0 + k*B, t0 + (k+1)*B) shares the pose at the
// bin centre (clamped to the trajectory), so the result does not depend on
// how the events are split between workers.
inline void compute_rays(const DsiGrid& grid, std::span<const Event> events, std::size_t begin, std::size_t end,
                         const CameraModel& cam, const BearingTable& bearings, const PoseTrajectory& traj,
                         double pose_batch, std::vector<PlaneSweep>& sweeps, std::vector<unsigned char>& valid) {
  PoseCursor cursor(traj);
  long cached_bin = std::numeric_limits<long>::min();
  std::optional<Se3> cached;
  for (std::size_t k = begin; k < end; ++k) {
    const Event& e = events[k];
    valid[k] = 0;
    if (!in_bounds(e, cam) || !traj.covers(e.t)) continue;
    std::optional<Se3> T_w_body;
    if (pose_batch > 0.0) {
      const long bin = static_cast<long>(std::floor((e.t - traj.front_time()) / pose_batch));
      if (bin != cached_bin) {
        const double centre = traj.front_time() + (static_cast<double>(bin) + 0.5) * pose_batch;
        cached = cursor.at(std::clamp(centre, traj.front_time(), traj.back_time()));
        cached_bin = bin;
      }
      T_w_body = cached;
    } else {
      T_w_body = cursor.at(e.t);
    }
    if (!T_w_body) continue;
    const Ray ray = ray_in_reference(grid, *T_w_body * cam.T_body_cam, bearings(e.x, e.y));
    sweeps[k] = plane_sweep(grid.ref_intrinsics(), ray);
    valid[k] = 1;
  }
}

}  // namespace detail

/// Votes a time-ordered batch of one camera's events into `grid`, looking
/// up each event's pose on `traj` (world-from-body) composed with the
/// camera extrinsic.
///
/// Workers first compute event rays over contiguous event ranges, then each
/// worker walks its own contiguous range of depth planes, depositing every
/// ray of the batch on one plane before moving to the next. Each voxel therefore receives its votes in event order whatever
/// the worker count, and the grid is bit-identical to single-worker voting.
inline VotingStats vote_events(DsiGrid& grid, std::span<const Event> events, const CameraModel& cam,
                               const BearingTable& bearings, const PoseTrajectory& traj,
                               const VotingOptions& opts) {
  if (bearings.width() != cam.width || bearings.height() != cam.height)
    throw InvalidArgument("bearing table does not match camera resolution");
  const std::size_t workers = std::min<std::size_t>(std::max(1, opts.threads),
                                                    static_cast<std::size_t>(std::max(1, grid.num_planes())));
  VotingStats stats;
  std::vector<double> plane_votes(static_cast<std::size_t>(grid.num_planes()), 0.0);
  const std::size_t batch = std::min(detail::kRayBatch, events.size());
  std::vector<detail::PlaneSweep> sweeps(batch);
  std::vector<unsigned char> valid(batch);
  const int W = grid.width();
  const int H = grid.height();
  const auto& depths = grid.depths();
  const auto& inv = grid.inverse_depths();
  std::vector<std::vector<unsigned char>> hit(workers, std::vector<unsigned char>(batch));

  for (std::size_t first = 0; first < events.size(); first += batch) {
    const auto chunk = events.subspan(first, std::min(batch, events.size() - first));
    const std::size_t n = chunk.size();
    parallel_blocks(n, std::min(workers, n), [&](std::size_t, std::size_t begin, std::size_t end) {
      detail::compute_rays(grid, chunk, begin, end, cam, bearings, traj, opts.pose_batch_seconds, sweeps, valid);
    });
    parallel_blocks(static_cast<std::size_t>(grid.num_planes()), workers,
                    [&](std::size_t w, std::size_t p0, std::size_t p1) {
                      auto& h = hit[w];
                      std::fill(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(n), 0);
                      for (std::size_t p = p0; p < p1; ++p) {
                        double* plane = grid.votes().data() + p * grid.plane_stride();
                        double added = 0.0;
                        for (std::size_t k = 0; k < n; ++k) {
                          if (!valid[k] || !sweeps[k].usable) continue;
                          bool touched = false;
                          added += detail::deposit(plane, W, H, sweeps[k], depths[p], inv[p], opts.mode, touched);
                          h[k] |= touched;
                        }
                        plane_votes[p] += added;
                      }
                    });
    for (std::size_t k = 0; k < n; ++k) {
      ++stats.events_read;
      if (!valid[k]) {
        ++stats.events_out_of_bounds;
        continue;
      }
      bool any = false;
      for (const auto& h : hit) any = any || h[k];
      if (any) {
        ++stats.events_voted;
      } else {
        ++stats.events_skipped;
        ++grid.skipped_events;
      }
    }
  }
  for (double v : plane_votes) stats.votes += v;
  return stats;
}

/// Voxel-wise fusion operator over n aligned DSIs.
struct FusionOp {
  enum class Kind { Min, Harmonic, Geometric, Arithmetic, Rms, Max, GeneralizedMean };

  Kind kind = Kind::Harmonic;
  double power = -1.0;  ///< only for GeneralizedMean

  static FusionOp min() { return {Kind::Min, -std::numeric_limits<double>::infinity()}; }
  static FusionOp harmonic() { return {Kind::Harmonic, -1.0}; }
  static FusionOp geometric() { return {Kind::Geometric, 0.0}; }
  static FusionOp arithmetic() { return {Kind::Arithmetic, 1.0}; }
  static FusionOp rms() { return {Kind::Rms, 2.0}; }
  static FusionOp max() { return {Kind::Max, std::numeric_limits<double>::infinity()}; }
  static FusionOp generalized(double p) { return {Kind::GeneralizedMean, p}; }

  /// Min, harmonic and geometric (and power means with p <= 0) vanish as
  /// soon as one input is zero.
  bool and_logic() const {
    switch (kind) {
      case Kind::Min:
      case Kind::Harmonic:
      case Kind::Geometric:
        return true;
      case Kind::GeneralizedMean:
        return power <= 0.0;
      default:
        return false;
    }
  }

  double operator()(std::span<const double> v) const {
    const std::size_t n = v.size();
    if (n == 0) return 0.0;
    bool all_equal = true;
    bool any_zero = false;
    for (double x : v) {
      all_equal = all_equal && x == v[0];
      any_zero = any_zero || x == 0.0;
    }
    if (all_equal) return v[0];
    if (any_zero && and_logic()) return 0.0;

    const double dn = static_cast<double>(n);
    switch (kind) {
      case Kind::Min:
        return *std::min_element(v.begin(), v.end());
      case Kind::Max:
        return *std::max_element(v.begin(), v.end());
      case Kind::Harmonic: {
        double s = 0.0;
        for (double x : v) s += 1.0 / x;
        return dn / s;
      }
      case Kind::Geometric: {
        if (n == 2) return std::sqrt(v[0] * v[1]);
        double s = 0.0;
        for (double x : v) s += std::log(x);
        return std::exp(s / dn);
      }
      case Kind::Arithmetic: {
        double s = 0.0;
        for (double x : v) s += x;
        return s / dn;
      }
      case Kind::Rms: {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s / dn);
      }
      case Kind::GeneralizedMean: {
        if (power == 0.0) return FusionOp::geometric()(v);
        if (std::isinf(power)) return power > 0 ? FusionOp::max()(v) : FusionOp::min()(v);
        double s = 0.0;
        for (double x : v) s += std::pow(x, power);
        return std::pow(s / dn, 1.0 / power);
      }
    }
    return 0.0;
  }

  std::string name() const {
    switch (kind) {
      case Kind::Min: return "min";
      case Kind::Harmonic: return "harmonic";
      case Kind::Geometric: return "geometric";
      case Kind::Arithmetic: return "arithmetic";
      case Kind::Rms: return "rms";
      case Kind::Max: return "max";
      case Kind::GeneralizedMean: {
        std::ostringstream s;
        s << "power:" << power;
        return s.str();
      }
    }
    return "?";
  }

  /// Accepts the names produced by name(), e.g. "harmonic" or "power:-2".
  static FusionOp parse(const std::string& s) {
    if (s == "min") return min();
    if (s == "harmonic") return harmonic();
    if (s == "geometric") return geometric();
    if (s == "arithmetic") return arithmetic();
    if (s == "rms") return rms();
    if (s == "max") return max();
    if (s.rfind("power:", 0) == 0) {
      try {
        std::size_t used = 0;
        const std::string num = s.substr(6);
        const double p = std::stod(num, &used);
        if (used == num.size() && !std::isnan(p)) return generalized(p);
      } catch (const std::exception&) {
      }
    }
    throw InvalidArgument("unknown fusion op '" + s +
                          "' (expected min|harmonic|geometric|arithmetic|rms|max|power:<p>)");
  }
};

/// Voxel-wise n-ary fusion of aligned DSIs.
inline DsiGrid fuse(std::span<const DsiGrid> grids, const FusionOp& op, int threads = 1) {
  if (grids.size() < 2) throw InvalidArgument("fusion needs at least two DSIs");
  for (std::size_t g = 1; g < grids.size(); ++g) {
    if (!grids[g].aligned_with(grids[0]) || grids[g].votes().size() != grids[0].votes().size())
      throw MisalignedDsi("DSI " + std::to_string(g) + " is not aligned with DSI 0");
  }
  DsiGrid out = grids[0].zeros_like();
  for (const auto& g : grids) out.skipped_events += g.skipped_events;

  const std::size_t n = grids.size();
  const std::size_t voxels = out.votes().size();
  parallel_blocks(voxels, static_cast<std::size_t>(std::max(1, threads)),
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    std::vector<double> buf(n);
                    for (std::size_t i = begin; i < end; ++i) {
                      for (std::size_t g = 0; g < n; ++g) buf[g] = grids[g].votes()[i];
                      out.votes()[i] = op(buf);
                    }
                  });
  return out;
}

}  // namespace raysweep
