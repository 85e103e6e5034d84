#pragma once

#include <cmath>
#include <cstddef>
#include <limits>

#include "raysweep/depth.hpp"
#include "raysweep/image.hpp"

namespace raysweep {

struct EvalOptions {
  /// Predictions are matched to ground-truth pixels within this Chebyshev
  /// radius (pixels); the closest one wins, ties to the nearer depth.
  int match_radius = 1;
  double outlier_relative_error = 0.10;
  /// Inverse-depth tolerance (1/m) for the accuracy figure; 0 disables it.
  double inverse_depth_tolerance = 0.0;
};

struct EvalMetrics {
  std::size_t predicted = 0;     ///< masked predicted pixels
  std::size_t ground_truth = 0;  ///< masked ground-truth pixels
  std::size_t matched = 0;       ///< predictions with a ground-truth match
  std::size_t outliers = 0;      ///< unmatched, or relative error above threshold
  std::size_t within_tolerance = 0;
  std::size_t covered = 0;  ///< ground-truth pixels with a prediction nearby
  double mean_abs_rel_error = 0.0;  ///< over matched predictions
  double outlier_fraction = 0.0;    ///< outliers / predicted
  double accuracy = 0.0;            ///< within_tolerance / predicted
  double density = 0.0;             ///< covered / ground_truth
};

/// Compares predicted and ground-truth depth images (0 = no depth).
inline EvalMetrics evaluate_depth(const Image<double>& pred, const Image<double>& gt, const EvalOptions& opts = {}) {
  EvalMetrics m;
  const int W = pred.width();
  const int H = pred.height();
  const int r = opts.match_radius;
  double rel_sum = 0.0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double zp = pred(x, y);
      if (!(zp > 0.0)) continue;
      ++m.predicted;
      double best_d2 = std::numeric_limits<double>::infinity();
      double zg = 0.0;
      for (int yy = std::max(0, y - r); yy <= std::min(H - 1, y + r); ++yy) {
        for (int xx = std::max(0, x - r); xx <= std::min(W - 1, x + r); ++xx) {
          const double g = gt(xx, yy);
          if (!(g > 0.0)) continue;
          const double d2 = double(xx - x) * (xx - x) + double(yy - y) * (yy - y);
          if (d2 < best_d2 || (d2 == best_d2 && g < zg)) {
            best_d2 = d2;
            zg = g;
          }
        }
      }
      if (!(zg > 0.0)) {
        ++m.outliers;
        continue;
      }
      ++m.matched;
      const double rel = std::abs(zp - zg) / zg;
      rel_sum += rel;
      if (rel > opts.outlier_relative_error) ++m.outliers;
      if (opts.inverse_depth_tolerance > 0.0 && std::abs(1.0 / zp - 1.0 / zg) <= opts.inverse_depth_tolerance)
        ++m.within_tolerance;
    }
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!(gt(x, y) > 0.0)) continue;
      ++m.ground_truth;
      bool hit = false;
      for (int yy = std::max(0, y - r); yy <= std::min(H - 1, y + r) && !hit; ++yy)
        for (int xx = std::max(0, x - r); xx <= std::min(W - 1, x + r) && !hit; ++xx) hit = pred(xx, yy) > 0.0;
      m.covered += hit;
    }
  }
  if (m.matched) m.mean_abs_rel_error = rel_sum / static_cast<double>(m.matched);
  if (m.predicted) {
    m.outlier_fraction = static_cast<double>(m.outliers) / static_cast<double>(m.predicted);
    m.accuracy = static_cast<double>(m.within_tolerance) / static_cast<double>(m.predicted);
  }
  if (m.ground_truth) m.density = static_cast<double>(m.covered) / static_cast<double>(m.ground_truth);
  return m;
}

/// Depth image with unmasked pixels set to 0.
inline Image<double> masked_depth(const DepthResult& r) {
  Image<double> out(r.width(), r.height(), 0.0);
  for (std::size_t p = 0; p < out.size(); ++p)
    if (r.mask.data()[p]) out.data()[p] = r.depth.data()[p];
  return out;
}

inline EvalMetrics evaluate_depth(const DepthResult& pred, const DepthResult& gt, const EvalOptions& opts = {}) {
  return evaluate_depth(masked_depth(pred), masked_depth(gt), opts);
}

/// Inverse-depth spacing of a uniform inverse-depth plane stack.
inline double inverse_depth_spacing(double z_min, double z_max, int num_planes) {
  return (1.0 / z_min - 1.0 / z_max) / static_cast<double>(num_planes - 1);
}

}  // namespace raysweep
