#pragma once

// Depth and confidence extraction from a (fused) DSI, plus the semi-dense
// post-processing chain: threshold -> median -> sub-plane refinement ->
// point cloud.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "raysweep/dsi.hpp"
#include "raysweep/errors.hpp"
#include "raysweep/geometry.hpp"
#include "raysweep/image.hpp"

namespace raysweep {

struct DepthResult {
  /// Depth of the best plane for every pixel (meters); meaningful where
  /// `mask` is set.
  Image<double> depth;
  /// Column maximum of the DSI, in vote units.
  Image<double> confidence;
  Mask mask;
  /// Index of the best plane per pixel.
  Image<int> plane_index;
  Se3 ref_pose;
  CameraModel ref_intrinsics;
  double z_min = 0.0;
  double z_max = 0.0;

  int width() const { return depth.width(); }
  int height() const { return depth.height(); }

  std::size_t masked_count() const {
    std::size_t n = 0;
    for (unsigned char m : mask.data()) n += m != 0;
    return n;
  }

  /// Confidence divided by its maximum, in [0, 1].
  Image<double> normalized_confidence() const {
    Image<double> out = confidence;
    double mx = 0.0;
    for (double c : confidence.data()) mx = std::max(mx, c);
    if (mx > 0.0)
      for (double& c : out.data()) c /= mx;
    return out;
  }
};

/// Empty result (nothing masked) on the given reference view.
inline DepthResult empty_depth_result(int width, int height, const Se3& ref_pose, const CameraModel& ref_intrinsics,
                                      double z_min, double z_max) {
  DepthResult r;
  r.depth = Image<double>(width, height, 0.0);
  r.confidence = Image<double>(width, height, 0.0);
  r.mask = Mask(width, height, 0);
  r.plane_index = Image<int>(width, height, 0);
  r.ref_pose = ref_pose;
  r.ref_intrinsics = ref_intrinsics.ideal();
  r.z_min = z_min;
  r.z_max = z_max;
  return r;
}

/// Per-pixel argmax along depth. Ties go to the nearest plane (smallest
/// index); a pixel is masked when its column maximum is positive.
inline DepthResult extract_depth(const DsiGrid& fused) {
  const int W = fused.width();
  const int H = fused.height();
  DepthResult r = empty_depth_result(W, H, fused.ref_pose(), fused.ref_intrinsics(), fused.z_min(), fused.z_max());

  const std::size_t stride = fused.plane_stride();
  const double* votes = fused.votes().data();
  auto& best = r.confidence.data();
  auto& index = r.plane_index.data();
  std::copy(votes, votes + stride, best.begin());
  for (int i = 1; i < fused.num_planes(); ++i) {
    const double* plane = votes + static_cast<std::size_t>(i) * stride;
    for (std::size_t p = 0; p < stride; ++p) {
      if (plane[p] > best[p]) {
        best[p] = plane[p];
        index[p] = i;
      }
    }
  }
  for (std::size_t p = 0; p < stride; ++p) {
    r.depth.data()[p] = fused.depths()[static_cast<std::size_t>(index[p])];
    r.mask.data()[p] = best[p] > 0.0 ? 1 : 0;
  }
  return r;
}

/// Parabola vertex through (s[i-1], v[i-1]), (s[i], v[i]), (s[i+1], v[i+1])
/// where s are inverse depths, clamped to the neighbouring interval.
/// Boundary indices and flat neighbourhoods are returned unrefined.
inline double subvoxel_refine(std::span<const double> column, int i_star, std::span<const double> inv_depths) {
  const auto i = static_cast<std::size_t>(i_star);
  const double s1 = inv_depths[i];
  if (i_star <= 0 || i + 1 >= column.size()) return s1;
  const double v0 = column[i - 1];
  const double v1 = column[i];
  const double v2 = column[i + 1];
  if (v0 == v2) return s1;
  const double s0 = inv_depths[i - 1];
  const double s2 = inv_depths[i + 1];

  const double a = (s1 - s0) * (v1 - v2);
  const double b = (s1 - s2) * (v1 - v0);
  const double denom = a - b;
  if (denom == 0.0 || !std::isfinite(denom)) return s1;
  const double vertex = s1 - 0.5 * ((s1 - s0) * a - (s1 - s2) * b) / denom;
  const double lo = std::min(s0, s2);
  const double hi = std::max(s0, s2);
  return std::clamp(vertex, lo, hi);
}

/// Replaces plane depths by sub-plane estimates for masked pixels that
/// still sit on their argmax plane (pixels rewritten by the median filter
/// are left alone).
inline void refine_depths(DepthResult& r, const DsiGrid& fused) {
  const std::size_t stride = fused.plane_stride();
  const auto& votes = fused.votes();
  std::vector<double> column(static_cast<std::size_t>(fused.num_planes()));
  for (std::size_t p = 0; p < stride; ++p) {
    if (!r.mask.data()[p]) continue;
    const int i_star = r.plane_index.data()[p];
    if (r.depth.data()[p] != fused.depths()[static_cast<std::size_t>(i_star)]) continue;
    for (std::size_t i = 0; i < column.size(); ++i) column[i] = votes[i * stride + p];
    const double s = subvoxel_refine(column, i_star, fused.inverse_depths());
    r.depth.data()[p] = std::clamp(1.0 / s, r.z_min, r.z_max);
  }
}

namespace detail {

inline int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace detail

/// Normalized 1-D Gaussian taps, radius ceil(3 sigma) (at least 1).
inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

/// Separable Gaussian blur with reflect-101 borders (dcb|abcd|cba).
inline Image<double> gaussian_blur(const Image<double>& img, double sigma) {
  const std::vector<double> k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int W = img.width();
  const int H = img.height();
  Image<double> tmp(W, H), out(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double s = 0.0;
      for (int j = -radius; j <= radius; ++j) s += k[static_cast<std::size_t>(j + radius)] * img(detail::reflect101(x + j, W), y);
      tmp(x, y) = s;
    }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double s = 0.0;
      for (int j = -radius; j <= radius; ++j) s += k[static_cast<std::size_t>(j + radius)] * tmp(x, detail::reflect101(y + j, H));
      out(x, y) = s;
    }
  return out;
}

/// Keeps pixels whose confidence is positive and exceeds the local
/// Gaussian-weighted mean by more than `offset`.
inline Mask adaptive_threshold(const Image<double>& confidence, double sigma, double offset) {
  if (!(sigma > 0.0)) throw InvalidArgument("adaptive threshold sigma must be positive");
  const Image<double> blurred = gaussian_blur(confidence, sigma);
  Mask mask(confidence.width(), confidence.height(), 0);
  for (std::size_t p = 0; p < mask.size(); ++p) {
    const double c = confidence.data()[p];
    mask.data()[p] = (c > 0.0 && c > blurred.data()[p] + offset) ? 1 : 0;
  }
  return mask;
}

/// k x k median of masked depths. Pixels with fewer than 3 masked pixels in
/// their window are dropped; the mask never grows. For an even number of
/// samples the upper median is used.
inline DepthResult median_filter_depth(const DepthResult& in, int k) {
  if (k < 1 || k % 2 == 0) throw InvalidArgument("median kernel must be odd and >= 1");
  if (k == 1) return in;
  DepthResult out = in;
  const int W = in.width();
  const int H = in.height();
  const int r = k / 2;
  std::vector<double> window;
  window.reserve(static_cast<std::size_t>(k) * k);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!in.mask(x, y)) continue;
      window.clear();
      for (int yy = std::max(0, y - r); yy <= std::min(H - 1, y + r); ++yy)
        for (int xx = std::max(0, x - r); xx <= std::min(W - 1, x + r); ++xx)
          if (in.mask(xx, yy)) window.push_back(in.depth(xx, yy));
      if (window.size() < 3) {
        out.mask(x, y) = 0;
        continue;
      }
      auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
      std::nth_element(window.begin(), mid, window.end());
      out.depth(x, y) = *mid;
    }
  }
  return out;
}

struct CloudPoint {
  Eigen::Vector3d position;  ///< world frame, meters
  double confidence = 0.0;
};

/// Back-projects every masked pixel through the reference pinhole and
/// moves it into the world frame.
inline std::vector<CloudPoint> to_point_cloud(const DepthResult& r) {
  std::vector<CloudPoint> cloud;
  cloud.reserve(r.masked_count());
  const CameraModel& K = r.ref_intrinsics;
  for (int y = 0; y < r.height(); ++y) {
    for (int x = 0; x < r.width(); ++x) {
      if (!r.mask(x, y)) continue;
      const double z = r.depth(x, y);
      const Eigen::Vector3d p_ref((x - K.cx) / K.fx * z, (y - K.cy) / K.fy * z, z);
      cloud.push_back({r.ref_pose * p_ref, r.confidence(x, y)});
    }
  }
  return cloud;
}

struct PostprocessOptions {
  double threshold_sigma = 7.0;
  double threshold_offset = -6.0;
  int median_kernel = 5;
  bool subvoxel = true;
};

/// Full extraction chain on a fused DSI.
inline DepthResult extract_semidense(const DsiGrid& fused, const PostprocessOptions& opts) {
  DepthResult r = extract_depth(fused);
  const Mask keep = adaptive_threshold(r.confidence, opts.threshold_sigma, opts.threshold_offset);
  for (std::size_t p = 0; p < keep.size(); ++p) r.mask.data()[p] = r.mask.data()[p] && keep.data()[p];
  r = median_filter_depth(r, opts.median_kernel);
  if (opts.subvoxel) refine_depths(r, fused);
  return r;
}

}  // namespace raysweep
