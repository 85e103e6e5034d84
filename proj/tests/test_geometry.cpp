#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "test_support.hpp"

using namespace raysweep;
using raysweep::testing::Gen;

namespace {

CameraModel camera_with(const Distortion& d) {
  CameraModel c = raysweep::testing::pinhole(640, 480, 400.0, 320.0, 240.0);
  c.dist = d;
  return c;
}

}  // namespace

TEST(Undistort, PrincipalPointMapsToOpticalAxis) {
  Gen g(1);
  for (int i = 0; i < 20; ++i) {
    const CameraModel c = camera_with(g.distortion());
    const Eigen::Vector2d xy = undistort_pixel({c.cx, c.cy}, c);
    EXPECT_EQ(xy.x(), 0.0);
    EXPECT_EQ(xy.y(), 0.0);
  }
}

TEST(Undistort, PinholeOffsetByFocalLength) {
  const CameraModel c = camera_with({});
  const Eigen::Vector2d xy = undistort_pixel({c.cx + c.fx, c.cy}, c);
  EXPECT_DOUBLE_EQ(xy.x(), 1.0);
  EXPECT_DOUBLE_EQ(xy.y(), 0.0);
}

TEST(Undistort, InvertsForwardModel) {
  const CameraModel c = camera_with({0.1, 0.0, 0.0, 0.0});
  const Eigen::Vector2d pix = c.normalized_to_pixel({0.3, -0.2});
  const Eigen::Vector2d xy = undistort_pixel(pix, c);
  EXPECT_NEAR(xy.x(), 0.3, 1e-6);
  EXPECT_NEAR(xy.y(), -0.2, 1e-6);
}

TEST(Undistort, RoundTripOnRandomPoints) {
  Gen g(2);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const CameraModel c = camera_with(g.distortion(0.2));
    const Eigen::Vector2d xy(g.uniform(-0.6, 0.6), g.uniform(-0.45, 0.45));
    const Eigen::Vector2d pix = c.normalized_to_pixel(xy);
    const Eigen::Vector2d back = undistort_pixel(pix, c);
    worst = std::max(worst, (c.normalized_to_pixel(back) - pix).norm());
    EXPECT_LT((back - xy).norm(), 1e-6);
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Undistort, ExtremeDistortionReportsNonConvergence) {
  const CameraModel c = camera_with({-5.0, 0.0, 0.0, 0.0});
  EXPECT_THROW(undistort_pixel({0.0, 0.0}, c), NonConvergedUndistortion);
}

TEST(Se3, ComposeWithInverseIsIdentity) {
  Gen g(3);
  for (int i = 0; i < 1000; ++i) {
    const Se3 T = g.pose();
    const Se3 I = T * T.inverse();
    EXPECT_LT(I.translation().norm(), 1e-9);
    EXPECT_LT(I.angle(), 1e-7);
    EXPECT_NEAR(T.rotation().norm(), 1.0, 1e-9);
  }
}

TEST(Se3, TransformsPoints) {
  const Se3 T = Se3::from_axis_angle(Eigen::Vector3d::UnitZ(), std::numbers::pi / 2, {1.0, 0.0, 0.0});
  const Eigen::Vector3d p = T * Eigen::Vector3d(1.0, 0.0, 0.0);
  EXPECT_NEAR(p.x(), 1.0, 1e-15);
  EXPECT_NEAR(p.y(), 1.0, 1e-15);
  EXPECT_NEAR(p.z(), 0.0, 1e-15);
}

TEST(RelativePose, SamePoseGivesIdentity) {
  Gen g(4);
  const Se3 T = g.pose();
  const Se3 R = relative_pose(T, T);
  EXPECT_LT(R.translation().norm(), 1e-12);
  EXPECT_LT(R.angle(), 1e-7);
}

TEST(RelativePose, FromIdentityIsTarget) {
  Gen g(5);
  const Se3 T = g.pose();
  const Se3 R = relative_pose(Se3::identity(), T);
  EXPECT_LT((R.translation() - T.translation()).norm(), 1e-15);
  EXPECT_LT(raysweep::testing::rotation_angle_between(R, T), 1e-7);
}

TEST(RelativePose, ComposesBackOnRandomPairs) {
  Gen g(6);
  for (int i = 0; i < 1000; ++i) {
    const Se3 a = g.pose(5.0);
    const Se3 b = g.pose(5.0);
    const Se3 back = a * relative_pose(a, b);
    EXPECT_LT((back.translation() - b.translation()).norm(), 1e-9);
    EXPECT_LT((back.rotation_matrix() - b.rotation_matrix()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Intersect, OpticalAxis) {
  const auto p = intersect_ray_with_depth_plane({0, 0, 0}, {0, 0, 1}, 2.0);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->x(), 0.0);
  EXPECT_EQ(p->y(), 0.0);
  EXPECT_EQ(p->z(), 2.0);
}

TEST(Intersect, BaselineOffset) {
  const auto p = intersect_ray_with_depth_plane({0.1, 0, 0}, {0, 0, 1}, 2.0);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->x(), 0.1);
  EXPECT_EQ(p->y(), 0.0);
}

TEST(Intersect, ObliqueRay) {
  const Eigen::Vector3d dir = Eigen::Vector3d(1, 0, 1).normalized();
  const auto p = intersect_ray_with_depth_plane({0, 0, 0}, dir, 3.0);
  ASSERT_TRUE(p);
  const double lambda = 3.0 / dir.z();
  EXPECT_DOUBLE_EQ(p->x(), lambda * dir.x());
  EXPECT_NEAR(p->x(), 3.0, 1e-12);
  EXPECT_EQ(p->y(), 0.0);
}

TEST(Intersect, BehindAndParallel) {
  EXPECT_FALSE(intersect_ray_with_depth_plane({0, 0, 3}, {0, 0, 1}, 2.0));
  EXPECT_FALSE(intersect_ray_with_depth_plane({0, 0, 2}, {0, 0, 1}, 2.0));
  EXPECT_FALSE(intersect_ray_with_depth_plane({0, 0, 0}, {1, 0, 0}, 2.0));
  EXPECT_FALSE(intersect_ray_with_depth_plane({0, 0, 0}, {1, 0, 1e-13}, 2.0));
}

TEST(Intersect, DepthComponentIsExact) {
  Gen g(7);
  int hits = 0;
  for (int i = 0; i < 2000; ++i) {
    const Eigen::Vector3d o(g.uniform(-1, 1), g.uniform(-1, 1), g.uniform(-1, 1));
    const double z = g.uniform(0.1, 10.0);
    const auto p = intersect_ray_with_depth_plane(o, g.unit_vector(), z);
    if (!p) continue;
    ++hits;
    EXPECT_EQ(p->z(), z);
  }
  EXPECT_GT(hits, 500);
}

TEST(Interpolate, ReturnsSamplesExactly) {
  Gen g(8);
  std::vector<PoseSample> s;
  for (int i = 0; i < 5; ++i) s.push_back({0.1 * i + 0.03, g.pose()});
  const PoseTrajectory traj(s);
  for (const auto& p : s) {
    const Se3 q = interpolate_pose(p.t, traj);
    EXPECT_EQ(q.translation(), p.pose.translation());
    EXPECT_EQ(q.rotation().coeffs(), p.pose.rotation().coeffs());
  }
}

TEST(Interpolate, LinearTranslationMidpoint) {
  const PoseTrajectory traj({{0.0, Se3::identity()}, {1.0, Se3::from_translation(2, 0, 0)}});
  const Se3 m = interpolate_pose(0.5, traj);
  EXPECT_DOUBLE_EQ(m.translation().x(), 1.0);
  EXPECT_EQ(m.translation().y(), 0.0);
  EXPECT_LT(m.angle(), 1e-12);
}

TEST(Interpolate, SlerpHalvesTheRotation) {
  const Eigen::Vector3d z = Eigen::Vector3d::UnitZ();
  const PoseTrajectory traj({{0.0, Se3::identity()}, {2.0, Se3::from_axis_angle(z, std::numbers::pi / 2)}});
  const Se3 m = interpolate_pose(1.0, traj);
  const Se3 expected = Se3::from_axis_angle(z, std::numbers::pi / 4);
  EXPECT_LT(raysweep::testing::rotation_angle_between(m, expected), 1e-9);
  EXPECT_LT((m.rotation_matrix() - expected.rotation_matrix()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Interpolate, TakesShortestArcAcrossDoubleCover) {
  const Eigen::Vector3d z = Eigen::Vector3d::UnitZ();
  Se3 b = Se3::from_axis_angle(z, 0.4);
  const Se3 flipped(Eigen::Quaterniond(-b.rotation().coeffs()), b.translation());
  const PoseTrajectory traj({{0.0, Se3::identity()}, {1.0, flipped}});
  EXPECT_NEAR(interpolate_pose(0.5, traj).angle(), 0.2, 1e-12);
}

TEST(Interpolate, AngleGrowsMonotonicallyAboutFixedAxis) {
  const Eigen::Vector3d axis = Eigen::Vector3d(1, 2, 3).normalized();
  const PoseTrajectory traj({{0.0, Se3::identity()}, {1.0, Se3::from_axis_angle(axis, 2.5)}});
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double a = interpolate_pose(i / 100.0, traj).angle();
    EXPECT_GT(a, prev);
    EXPECT_NEAR(a, 2.5 * i / 100.0, 1e-9);
    prev = a;
  }
}

TEST(Interpolate, OutsideSpanThrows) {
  const PoseTrajectory traj({{1.0, Se3::identity()}, {2.0, Se3::identity()}});
  EXPECT_THROW(interpolate_pose(0.999, traj), OutOfTrajectoryRange);
  EXPECT_THROW(interpolate_pose(2.001, traj), OutOfTrajectoryRange);
  EXPECT_NO_THROW(interpolate_pose(2.0, traj));
}

TEST(Trajectory, RejectsBadSampleLists) {
  EXPECT_THROW(PoseTrajectory(std::vector<PoseSample>{}), InvalidArgument);
  EXPECT_THROW(PoseTrajectory({{1.0, Se3::identity()}, {1.0, Se3::identity()}}), InvalidArgument);
  EXPECT_THROW(PoseTrajectory({{1.0, Se3::identity()}, {0.5, Se3::identity()}}), InvalidArgument);
}

TEST(CameraModel, ValidateChecksInvariants) {
  CameraModel c = raysweep::testing::pinhole(10, 10, 5.0, 5.0, 5.0);
  EXPECT_NO_THROW(c.validate());
  c.fx = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = raysweep::testing::pinhole(10, 10, 5.0, 10.0, 5.0);
  EXPECT_THROW(c.validate(), InvalidArgument);
}
