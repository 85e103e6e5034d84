#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace raysweep;
using raysweep::testing::pinhole;

namespace {

RigCalibration pinhole_rig() {
  RigCalibration rig;
  rig.name = "test";
  const CameraModel cam = pinhole(101, 81, 100.0, 50.0, 40.0);
  CameraModel right = cam;
  right.T_body_cam = Se3::from_translation(0.1, 0.0, 0.0);
  rig.cameras = {cam, right};
  return rig;
}

PoseTrajectory slide_x(double distance, double duration) {
  return PoseTrajectory({{0.0, Se3::identity()}, {duration, Se3::from_translation(distance, 0.0, 0.0)}});
}

std::size_t total_events(const std::vector<EventStream>& s) {
  std::size_t n = 0;
  for (const auto& x : s) n += x.size();
  return n;
}

}  // namespace

TEST(Simulate, TenThetaOfImageMotionGivesTenEvents) {
  const RigCalibration rig = pinhole_rig();
  for (double theta : {0.5, 1.0, 1.5}) {
    for (double z : {1.0, 2.5}) {
      SyntheticScene scene;
      scene.theta = theta;
      scene.points = {{0.0, 0.0, z}};
      const double d = 10.0 * theta * z / rig.cameras[0].fx;
      const auto streams = simulate_events(scene, rig, slide_x(d, 1.0), 1e-3);
      const auto n = static_cast<long>(streams[0].size());
      EXPECT_GE(n, 9) << "theta " << theta << " z " << z;
      EXPECT_LE(n, 11) << "theta " << theta << " z " << z;
      for (const auto& e : streams[0].events) EXPECT_EQ(e.polarity, -1);
    }
  }
}

TEST(Simulate, DoublingSpeedKeepsThePixels) {
  const RigCalibration rig = pinhole_rig();
  SyntheticScene scene;
  scene.points = {{0.1, 0.05, 1.5}, {-0.2, 0.1, 2.0}, {0.0, -0.1, 3.0}};
  const auto slow = simulate_events(scene, rig, slide_x(0.2, 1.0), 1e-3);
  const auto fast = simulate_events(scene, rig, slide_x(0.2, 0.5), 0.5e-3);
  for (std::size_t c = 0; c < 2; ++c) {
    ASSERT_EQ(slow[c].size(), fast[c].size());
    ASSERT_GT(slow[c].size(), 0u);
    for (std::size_t i = 0; i < slow[c].size(); ++i) {
      EXPECT_EQ(slow[c].events[i].x, fast[c].events[i].x);
      EXPECT_EQ(slow[c].events[i].y, fast[c].events[i].y);
      EXPECT_EQ(slow[c].events[i].polarity, fast[c].events[i].polarity);
      EXPECT_NEAR(fast[c].events[i].t, 0.5 * slow[c].events[i].t, 1e-9);
    }
  }
}

TEST(Simulate, StaticCameraIsSilent) {
  const RigCalibration rig = pinhole_rig();
  SyntheticScene scene;
  scene.points = {{0.0, 0.0, 1.0}, {0.3, 0.2, 2.0}};
  EXPECT_EQ(total_events(simulate_events(scene, rig, slide_x(0.0, 1.0), 1e-3)), 0u);
}

TEST(Simulate, TooCoarseStepIsRejected) {
  const RigCalibration rig = pinhole_rig();
  SyntheticScene scene;
  scene.points = {{0.0, 0.0, 1.0}};
  EXPECT_THROW(simulate_events(scene, rig, slide_x(1.0, 1.0), 0.1), MotionTooFastForStep);
}

TEST(Simulate, EventsAreOrderedAndOnTheSensor) {
  const Scenario sc = make_scenario("lateral_room");
  const auto streams = simulate_events(sc.scene, sc.rig, sc.trajectory, sc.dt);
  for (std::size_t c = 0; c < streams.size(); ++c) {
    ASSERT_GT(streams[c].size(), 1000u);
    for (std::size_t i = 0; i < streams[c].size(); ++i) {
      EXPECT_TRUE(in_bounds(streams[c].events[i], sc.rig.cameras[c]));
      if (i > 0) EXPECT_LE(streams[c].events[i - 1].t, streams[c].events[i].t);
    }
  }
}

TEST(Scenarios, ForwardMotionProducesFewerEvents) {
  const Scenario lat = make_scenario("lateral_room");
  const Scenario fwd = make_scenario("forward_corridor");
  const auto a = simulate_events(lat.scene, lat.rig, lat.trajectory, lat.dt);
  const auto b = simulate_events(fwd.scene, fwd.rig, fwd.trajectory, fwd.dt);
  EXPECT_LT(total_events(b), total_events(a));
}

TEST(Scenarios, NoisyLeftAddsTwentyPercentToTheLeftCamera) {
  const Scenario clean = make_scenario("lateral_room", 3);
  const Scenario noisy = make_scenario("noisy_left", 3);
  const auto a = simulate_events(clean.scene, clean.rig, clean.trajectory, clean.dt);
  const auto b = simulate_events(noisy.scene, noisy.rig, noisy.trajectory, noisy.dt);
  EXPECT_EQ(b[0].size(), a[0].size() + static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(a[0].size()))));
  EXPECT_EQ(b[1].size(), a[1].size());
  for (std::size_t i = 1; i < b[0].size(); ++i) ASSERT_LE(b[0].events[i - 1].t, b[0].events[i].t);
}

TEST(Scenarios, SameSeedSameEvents) {
  for (const auto& name : scenario_names()) {
    const Scenario a = make_scenario(name, 5);
    const Scenario b = make_scenario(name, 5);
    const auto ea = simulate_events(a.scene, a.rig, a.trajectory, a.dt);
    const auto eb = simulate_events(b.scene, b.rig, b.trajectory, b.dt);
    ASSERT_EQ(ea.size(), eb.size());
    for (std::size_t c = 0; c < ea.size(); ++c) {
      ASSERT_EQ(ea[c].size(), eb[c].size()) << name;
      for (std::size_t i = 0; i < ea[c].size(); ++i) {
        ASSERT_EQ(ea[c].events[i].t, eb[c].events[i].t);
        ASSERT_EQ(ea[c].events[i].x, eb[c].events[i].x);
      }
    }
  }
  EXPECT_NE(make_scenario("lateral_room", 5).scene.points.front(), make_scenario("lateral_room", 6).scene.points.front());
}

TEST(Scenarios, UnknownNameThrows) { EXPECT_THROW(make_scenario("underwater"), UnknownScenario); }

TEST(Scenarios, ConfigsValidate) {
  for (const auto& name : scenario_names()) {
    const Scenario sc = make_scenario(name);
    EXPECT_NO_THROW(sc.config.validate()) << name;
    EXPECT_NO_THROW(sc.rig.validate()) << name;
  }
}

TEST(GroundTruth, ProjectsNearestSurface) {
  const CameraModel K = pinhole(11, 9, 10.0, 5.0, 4.0);
  SyntheticScene scene;
  scene.points = {{0.0, 0.0, 2.0}, {0.0, 0.0, 1.0}, {0.2, 0.0, 1.0}, {0.0, 0.0, -1.0}, {10.0, 0.0, 1.0}};
  const DepthResult gt = ground_truth_depth(scene, Se3::identity(), K);
  EXPECT_EQ(gt.masked_count(), 2u);
  EXPECT_EQ(gt.depth(5, 4), 1.0);
  EXPECT_TRUE(gt.mask(7, 4));
  EXPECT_EQ(gt.z_min, 1.0);
  EXPECT_EQ(gt.z_max, 1.0);
}

TEST(GroundTruth, FollowsTheReferencePose) {
  const CameraModel K = pinhole(11, 9, 10.0, 5.0, 4.0);
  SyntheticScene scene;
  scene.points = {{1.0, 0.0, 3.0}};
  const DepthResult gt = ground_truth_depth(scene, Se3::from_translation(1.0, 0.0, 1.0), K);
  EXPECT_TRUE(gt.mask(5, 4));
  EXPECT_EQ(gt.depth(5, 4), 2.0);
}

TEST(GroundTruth, ScenarioPointsLieInsideThePlaneRange) {
  const Scenario sc = make_scenario("lateral_room");
  const auto streams = simulate_events(sc.scene, sc.rig, sc.trajectory, sc.dt);
  const Chunk c = chunk_events(streams, sc.config.chunk_duration).front();
  const Se3 ref = select_reference_view(c, sc.trajectory, sc.rig.cameras[0]);
  const DepthResult gt = ground_truth_depth(sc.scene, ref, sc.rig.cameras[0]);
  EXPECT_GT(gt.masked_count(), 300u);
  EXPECT_GE(gt.z_min, sc.config.z_min);
  EXPECT_LE(gt.z_max, sc.config.z_max);
}

TEST(Subsample, KeepsOrderAndCount) {
  EventStream s;
  for (int i = 0; i < 1000; ++i) s.events.push_back({i * 1e-3, i % 50, i / 50, 1});
  const EventStream a = subsample_stream(s, 100, 4);
  ASSERT_EQ(a.size(), 100u);
  for (std::size_t i = 1; i < a.size(); ++i) EXPECT_LT(a.events[i - 1].t, a.events[i].t);
  EXPECT_EQ(subsample_stream(s, 5000, 4).size(), 1000u);
  const EventStream b = subsample_stream(s, 100, 4);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.events[i].t, b.events[i].t);
}
